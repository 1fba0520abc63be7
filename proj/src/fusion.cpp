#include "lorafuse/fusion.hpp"

#include "lorafuse/error.hpp"

namespace lorafuse {

FusionMethod fusion_method_from_string(const std::string& name) {
  if (name == "fedavg") return FusionMethod::kFedAvg;
  if (name == "ffa") return FusionMethod::kFfa;
  if (name == "fedsa") return FusionMethod::kFedSa;
  throw ParamError("unknown fusion method '" + name +
                   "' (expected fedavg, ffa or fedsa)");
}

std::string fusion_method_name(FusionMethod method) {
  switch (method) {
    case FusionMethod::kFedAvg: return "fedavg";
    case FusionMethod::kFfa: return "ffa";
    case FusionMethod::kFedSa: return "fedsa";
  }
  throw ParamError("invalid fusion method value");
}

DenseMatrix fedavg(std::span<const DenseMatrix> updates) {
  return mean(updates);
}

DenseMatrix ffa_fuse(std::span<const DenseMatrix> b_factors,
                     const DenseMatrix& a_frozen, double scale) {
  DenseMatrix b_mean = mean(b_factors);
  if (b_mean.cols() != a_frozen.rows()) {
    throw ShapeError("ffa_fuse: mean B is " + std::to_string(b_mean.rows()) +
                     "x" + std::to_string(b_mean.cols()) + ", frozen A is " +
                     std::to_string(a_frozen.rows()) + "x" +
                     std::to_string(a_frozen.cols()));
  }
  return matmul(b_mean, a_frozen).scaled(scale);
}

DenseMatrix fedsa_fuse(std::span<const DenseMatrix> a_factors,
                       std::span<const DenseMatrix> b_factors, double scale) {
  return factor_avg_fuse(b_factors, a_factors, scale);
}

DenseMatrix factor_avg_fuse(std::span<const DenseMatrix> b_factors,
                            std::span<const DenseMatrix> a_factors,
                            double scale) {
  if (a_factors.size() != b_factors.size()) {
    throw ShapeError("factor fuse: " + std::to_string(b_factors.size()) +
                     " B factors vs " + std::to_string(a_factors.size()) +
                     " A factors");
  }
  DenseMatrix b_mean = mean(b_factors);
  DenseMatrix a_mean = mean(a_factors);
  if (b_mean.cols() != a_mean.rows()) {
    throw ShapeError("factor fuse: mean B is " + std::to_string(b_mean.rows()) +
                     "x" + std::to_string(b_mean.cols()) + ", mean A is " +
                     std::to_string(a_mean.rows()) + "x" +
                     std::to_string(a_mean.cols()));
  }
  return matmul(b_mean, a_mean).scaled(scale);
}

void check_identical_frozen_a(std::span<const DenseMatrix> a_factors,
                              std::span<const std::string> labels) {
  for (std::size_t i = 1; i < a_factors.size(); ++i) {
    if (!(a_factors[i] == a_factors[0])) {
      const std::string first = labels.empty() ? "client 0" : labels[0];
      const std::string bad =
          i < labels.size() ? labels[i] : "client " + std::to_string(i);
      throw ProtocolError("ffa protocol violated: frozen A of " + bad +
                          " differs from " + first);
    }
  }
}

Backbone apply_fusion(const Backbone& backbone,
                      std::span<const DenseMatrix> fused_per_layer) {
  if (fused_per_layer.size() != backbone.num_layers()) {
    throw ShapeError("apply_fusion: " + std::to_string(fused_per_layer.size()) +
                     " updates for " + std::to_string(backbone.num_layers()) +
                     " layers");
  }
  std::vector<Layer> out;
  for (std::size_t i = 0; i < backbone.num_layers(); ++i) {
    const Layer& l = backbone.layer(i);
    const DenseMatrix& f = fused_per_layer[i];
    if (f.rows() != l.weight.rows() || f.cols() != l.weight.cols()) {
      throw ShapeError("apply_fusion: layer '" + l.name + "' is " +
                       std::to_string(l.weight.rows()) + "x" +
                       std::to_string(l.weight.cols()) + " but update is " +
                       std::to_string(f.rows()) + "x" +
                       std::to_string(f.cols()));
    }
    out.push_back({l.name, add(l.weight, f)});
  }
  return Backbone(backbone.topology(), std::move(out));
}

}  // namespace lorafuse
