#include "lorafuse/report.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "lorafuse/error.hpp"

namespace lorafuse {

namespace {

using nlohmann::ordered_json;

void dump_string(std::ostream& os, const std::string& s) {
  os << '"';
  for (char c : s) {
    switch (c) {
      case '"': os << "\\\""; break;
      case '\\': os << "\\\\"; break;
      case '\n': os << "\\n"; break;
      case '\r': os << "\\r"; break;
      case '\t': os << "\\t"; break;
      default:
        if (static_cast<unsigned char>(c) < 0x20) {
          char buf[8];
          std::snprintf(buf, sizeof buf, "\\u%04x", c);
          os << buf;
        } else {
          os << c;
        }
    }
  }
  os << '"';
}

void dump_value(std::ostream& os, const ordered_json& v, int indent) {
  const std::string pad(static_cast<std::size_t>(indent) * 2, ' ');
  const std::string pad_in(static_cast<std::size_t>(indent + 1) * 2, ' ');
  switch (v.type()) {
    case ordered_json::value_t::object: {
      if (v.empty()) {
        os << "{}";
        return;
      }
      os << "{\n";
      bool first = true;
      for (auto it = v.begin(); it != v.end(); ++it) {
        if (!first) os << ",\n";
        first = false;
        os << pad_in;
        dump_string(os, it.key());
        os << ": ";
        dump_value(os, it.value(), indent + 1);
      }
      os << "\n" << pad << "}";
      return;
    }
    case ordered_json::value_t::array: {
      if (v.empty()) {
        os << "[]";
        return;
      }
      os << "[";
      bool first = true;
      for (const auto& item : v) {
        if (!first) os << ", ";
        first = false;
        dump_value(os, item, indent + 1);
      }
      os << "]";
      return;
    }
    case ordered_json::value_t::string:
      dump_string(os, v.get<std::string>());
      return;
    case ordered_json::value_t::boolean:
      os << (v.get<bool>() ? "true" : "false");
      return;
    case ordered_json::value_t::number_integer:
      os << v.get<long long>();
      return;
    case ordered_json::value_t::number_unsigned:
      os << v.get<unsigned long long>();
      return;
    case ordered_json::value_t::number_float: {
      char buf[40];
      std::snprintf(buf, sizeof buf, "%.12g", v.get<double>());
      os << buf;
      return;
    }
    case ordered_json::value_t::null:
    default:
      os << "null";
      return;
  }
}

}  // namespace

std::string dump_json(const ordered_json& doc) {
  std::ostringstream os;
  dump_value(os, doc, 0);
  os << "\n";
  return os.str();
}

void write_json_file(const std::string& path, const ordered_json& doc) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open for writing: " + tmp);
    out << dump_json(doc);
    if (!out) throw IoError("write failed: " + tmp);
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("rename failed: " + tmp + " -> " + path);
}

ordered_json config_to_json(const Config& cfg) {
  ordered_json j;
  j["seed"] = cfg.seed;
  j["num_clients"] = cfg.num_clients;
  j["domains"] = {{"d_out", cfg.domains.d_out},
                  {"d_in", cfg.domains.d_in},
                  {"teacher_rank", cfg.domains.teacher_rank},
                  {"overlap", cfg.domains.overlap},
                  {"noise_sigma", cfg.domains.noise_sigma},
                  {"train_samples", cfg.domains.train_samples},
                  {"test_samples", cfg.domains.test_samples}};
  j["prune"] = {{"ratio", cfg.prune.ratio},
                {"calibration_size", cfg.prune.calibration_size}};
  j["lora"] = {{"rank", cfg.lora.rank}, {"alpha", cfg.lora.alpha}};
  j["train"] = {{"lr", cfg.train.lr}, {"steps", cfg.train.steps}};
  j["fusion"] = {{"method", cfg.fusion.method},
                 {"factor_avg", cfg.fusion.factor_avg}};
  j["cr"] = {{"enabled", cfg.cr.enabled},
             {"max_dirs", cfg.cr.max_dirs},
             {"tol", cfg.cr.tol}};
  j["eval"] = {{"hardness_floor", cfg.eval.hardness_floor}};
  j["output_dir"] = cfg.output_dir;
  return j;
}

ordered_json report_to_json(const RunReport& report) {
  ordered_json j;
  j["schema_version"] = 1;
  j["generator"] = "lorafuse";
  j["surrogate_loss"] = "mean_squared_error";
  j["seed"] = report.seed;
  j["config"] = config_to_json(report.config);
  j["pruning"] = {{"params_before", report.params_before},
                  {"params_after", report.params_after},
                  {"ratio_requested", report.prune_ratio_requested},
                  {"ratio_actual", report.prune_ratio_actual}};

  ordered_json clients = ordered_json::array();
  for (const ClientReport& c : report.clients) {
    clients.push_back({{"client", c.client},
                       {"domain", c.domain_id},
                       {"initial_loss", c.initial_loss},
                       {"final_loss", c.final_loss}});
  }
  j["clients"] = clients;

  ordered_json conflict;
  conflict["layer"] = kLayerName;
  conflict["pre_cr_mean"] = report.pre_cr_mean_conflict;
  conflict["pre_cr_per_direction"] = report.pre_cr_per_direction;
  if (report.post_cr_mean_conflict) {
    conflict["post_cr_mean"] = *report.post_cr_mean_conflict;
    conflict["post_cr_per_direction"] = report.post_cr_per_direction;
  }
  j["conflict"] = conflict;

  ordered_json in_domain = ordered_json::array();
  for (const InDomainEval& e : report.in_domain) {
    ordered_json entry = {{"domain", e.domain_id},
                          {"base", e.base},
                          {"fused", e.fused}};
    if (e.fused_cr) entry["fused_cr"] = *e.fused_cr;
    in_domain.push_back(entry);
  }
  ordered_json cross = ordered_json::array();
  for (const CrossDomainEval& e : report.cross_domain) {
    ordered_json entry = {{"domain_a", e.domain_a},
                          {"domain_b", e.domain_b},
                          {"base", e.base},
                          {"fused", e.fused}};
    if (e.fused_cr) entry["fused_cr"] = *e.fused_cr;
    cross.push_back(entry);
  }
  j["evaluation"] = {{"in_domain", in_domain}, {"cross_domain", cross}};

  ordered_json timings;
  timings["generate_s"] = report.timings.generate_s;
  timings["prune_s"] = report.timings.prune_s;
  timings["train_s"] = report.timings.train_s;
  timings["recover_s"] = report.timings.recover_s;
  if (report.post_cr_mean_conflict) timings["cr_s"] = report.timings.cr_s;
  timings["fuse_s"] = report.timings.fuse_s;
  timings["evaluate_s"] = report.timings.evaluate_s;
  timings["total_s"] = report.timings.total_s;
  j["timings"] = timings;
  return j;
}

ordered_json conflict_to_json(const ConflictReport& report,
                              const std::string& layer_name) {
  ordered_json j;
  j["layer"] = layer_name;
  j["num_directions"] = report.num_directions();
  j["num_adapters"] = report.num_adapters();
  j["conflict"] = report.conflict;
  j["gate"] = report.gate;
  j["energy"] = report.energy;
  j["consistency"] = report.consistency;
  j["consensus"] = report.consensus;
  j["mean_conflict"] = report.mean_conflict;
  return j;
}

void write_report(const std::string& path, const RunReport& report) {
  write_json_file(path, report_to_json(report));
}

}  // namespace lorafuse
