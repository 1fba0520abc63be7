#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "lorafuse/adapter_io.hpp"
#include "lorafuse/config.hpp"
#include "lorafuse/conflict.hpp"
#include "lorafuse/error.hpp"
#include "lorafuse/fusion.hpp"
#include "lorafuse/log.hpp"
#include "lorafuse/recover.hpp"
#include "lorafuse/report.hpp"
#include "lorafuse/rng.hpp"
#include "lorafuse/sim.hpp"

namespace {

namespace fs = std::filesystem;
using lorafuse::Config;
using nlohmann::ordered_json;

std::string client_adapter_path(const std::string& dir, std::size_t i) {
  return dir + "/adapter_client" + std::to_string(i) + ".lcra";
}
std::string recovered_path(const std::string& dir, std::size_t i) {
  return dir + "/recovered_client" + std::to_string(i) + ".lcra";
}
std::string cr_path(const std::string& dir, std::size_t i) {
  return dir + "/cr_client" + std::to_string(i) + ".lcra";
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw lorafuse::IoError("cannot create output dir: " + dir);
}

// Lossless container for a dense update matrix: one factor is the update
// itself, the other an identity, with alpha == rank so the scale is 1.
lorafuse::LoraAdapter dense_update_container(const std::string& layer,
                                             const lorafuse::DenseMatrix& u) {
  lorafuse::LoraAdapter ad;
  ad.layer_name = layer;
  if (u.rows() >= u.cols()) {
    ad.B = u;
    ad.A = lorafuse::DenseMatrix::identity(u.cols());
    ad.rank = u.cols();
  } else {
    ad.B = lorafuse::DenseMatrix::identity(u.rows());
    ad.A = u;
    ad.rank = u.rows();
  }
  ad.alpha = static_cast<double>(ad.rank);
  return ad;
}

ordered_json prune_map_to_json(const Config& cfg, const lorafuse::PruneMap& map) {
  ordered_json layers = ordered_json::array();
  for (const auto& lp : map.layers) {
    layers.push_back({{"layer", lp.layer_name},
                      {"retained_rows", lp.retained_rows},
                      {"retained_cols", lp.retained_cols}});
  }
  return ordered_json{
      {"layers", layers},
      {"params_before", map.params_before},
      {"params_after", map.params_after},
      {"ratio_requested", cfg.prune.ratio},
      {"ratio_actual",
       lorafuse::pruning_ratio(map.params_before, map.params_after)}};
}

lorafuse::PruneMap prune_map_from_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw lorafuse::IoError("cannot open " + path + " (run `prune` first)");
  }
  nlohmann::json doc = nlohmann::json::parse(in);
  lorafuse::PruneMap map;
  for (const auto& l : doc.at("layers")) {
    lorafuse::LayerPrune lp;
    lp.layer_name = l.at("layer").get<std::string>();
    lp.retained_rows = l.at("retained_rows").get<std::vector<std::size_t>>();
    lp.retained_cols = l.at("retained_cols").get<std::vector<std::size_t>>();
    map.layers.push_back(std::move(lp));
  }
  map.params_before = doc.at("params_before").get<std::size_t>();
  map.params_after = doc.at("params_after").get<std::size_t>();
  return map;
}

void check_consistent_dims(const std::vector<lorafuse::AdapterFile>& files,
                           const std::string& dir,
                           std::string (*pathfn)(const std::string&, std::size_t)) {
  for (std::size_t i = 1; i < files.size(); ++i) {
    if (files[i].d_out != files[0].d_out || files[i].d_in != files[0].d_in) {
      throw lorafuse::ShapeError(
          "adapter dims mismatch between " + pathfn(dir, 0) + " (" +
          std::to_string(files[0].d_out) + "x" + std::to_string(files[0].d_in) +
          ") and " + pathfn(dir, i) + " (" + std::to_string(files[i].d_out) +
          "x" + std::to_string(files[i].d_in) + ")");
    }
  }
}

int cmd_prune(const Config& cfg, const std::string& out) {
  const auto gen = lorafuse::gen_domains(cfg, cfg.seed);
  const auto map = lorafuse::compute_prune_map(cfg, gen);
  lorafuse::write_json_file(out + "/prune_map.json", prune_map_to_json(cfg, map));
  lorafuse::log_info("prune: retained " +
                     std::to_string(map.layers[0].retained_rows.size()) +
                     " of " + std::to_string(cfg.domains.d_out) + " rows");
  return 0;
}

int cmd_train(const Config& cfg, const std::string& out) {
  const auto gen = lorafuse::gen_domains(cfg, cfg.seed);
  const auto map = prune_map_from_json(out + "/prune_map.json");
  const auto pruned = lorafuse::apply_prune(gen.backbone, map);
  const auto& lp = map.layers[0];

  lorafuse::TrainConfig tcfg;
  tcfg.learning_rate = cfg.train.lr;
  tcfg.steps = cfg.train.steps;
  tcfg.rank = cfg.lora.rank;
  tcfg.alpha = cfg.lora.alpha;
  tcfg.seed = lorafuse::mix_seed(cfg.seed, lorafuse::seed_stream::kAdapterInit);
  tcfg.freeze_a = cfg.fusion.method == "ffa";

  for (std::size_t i = 0; i < cfg.num_clients; ++i) {
    const auto local = lorafuse::restrict_domain(gen.domains[i], lp);
    auto init = lorafuse::init_adapter(lorafuse::kLayerName,
                                       lp.retained_rows.size(),
                                       lp.retained_cols.size(), tcfg.rank,
                                       tcfg.alpha, tcfg.seed);
    auto tr = lorafuse::local_train(pruned, init, local, tcfg);
    lorafuse::write_adapter(client_adapter_path(out, i), tr.adapter, map,
                            cfg.domains.d_out, cfg.domains.d_in, tcfg.seed);
    lorafuse::log_info("train: client " + std::to_string(i) + " loss " +
                       std::to_string(tr.loss_trace.front()) + " -> " +
                       std::to_string(tr.loss_trace.back()));
  }
  return 0;
}

int cmd_recover(const Config& cfg, const std::string& out) {
  for (std::size_t i = 0; i < cfg.num_clients; ++i) {
    const auto file = lorafuse::read_adapter(client_adapter_path(out, i));
    const auto rec =
        lorafuse::recover(file.adapter, file.map, file.d_out, file.d_in);
    const auto idmap =
        lorafuse::identity_map(rec.adapter.layer_name, file.d_out, file.d_in);
    lorafuse::write_adapter(recovered_path(out, i), rec.adapter, idmap,
                            file.d_out, file.d_in, file.seed);
  }
  return 0;
}

int cmd_cr(const Config& cfg, const std::string& out) {
  std::vector<lorafuse::AdapterFile> files;
  for (std::size_t i = 0; i < cfg.num_clients; ++i) {
    files.push_back(lorafuse::read_adapter(recovered_path(out, i)));
  }
  check_consistent_dims(files, out, recovered_path);

  std::vector<lorafuse::DenseMatrix> updates;
  for (const auto& f : files) updates.push_back(lorafuse::materialize(f.adapter));

  const auto result = lorafuse::deconflict(updates, cfg.cr.max_dirs, cfg.cr.tol);
  const auto post =
      lorafuse::deconflict(result.updates, cfg.cr.max_dirs, cfg.cr.tol);

  for (std::size_t i = 0; i < result.updates.size(); ++i) {
    const auto refactored = lorafuse::refactor_update(
        result.updates[i], files[i].adapter.layer_name, cfg.cr.max_dirs);
    const auto idmap = lorafuse::identity_map(refactored.layer_name,
                                              files[i].d_out, files[i].d_in);
    lorafuse::write_adapter(cr_path(out, i), refactored, idmap, files[i].d_out,
                            files[i].d_in, files[i].seed);
  }

  ordered_json doc =
      lorafuse::conflict_to_json(result.report, files[0].adapter.layer_name);
  doc["post_cr_mean"] = post.report.mean_conflict;
  doc["post_cr_per_direction"] = post.report.conflict;
  lorafuse::write_json_file(out + "/conflict_report.json", doc);

  std::printf("cr: mean_conflict=%.12g post=%.12g directions=%zu\n",
              result.report.mean_conflict, post.report.mean_conflict,
              result.report.num_directions());
  return 0;
}

int cmd_fuse(const Config& cfg, const std::string& out) {
  std::vector<lorafuse::AdapterFile> recovered;
  for (std::size_t i = 0; i < cfg.num_clients; ++i) {
    recovered.push_back(lorafuse::read_adapter(recovered_path(out, i)));
  }
  check_consistent_dims(recovered, out, recovered_path);

  lorafuse::DenseMatrix fused;
  if (cfg.cr.enabled) {
    std::vector<lorafuse::AdapterFile> cr_files;
    for (std::size_t i = 0; i < cfg.num_clients; ++i) {
      cr_files.push_back(lorafuse::read_adapter(cr_path(out, i)));
    }
    check_consistent_dims(cr_files, out, cr_path);
    std::vector<lorafuse::DenseMatrix> updates;
    for (const auto& f : cr_files) {
      updates.push_back(lorafuse::materialize(f.adapter));
    }
    const lorafuse::DenseMatrix* frozen_a =
        cfg.fusion.method == "ffa" ? &recovered[0].adapter.A : nullptr;
    fused = lorafuse::fuse_deconflicted(cfg, updates, frozen_a);
  } else {
    std::vector<lorafuse::LoraAdapter> adapters;
    for (const auto& f : recovered) adapters.push_back(f.adapter);
    fused = lorafuse::fuse_recovered(cfg, adapters);
  }

  const auto container =
      dense_update_container(recovered[0].adapter.layer_name, fused);
  const auto idmap = lorafuse::identity_map(
      container.layer_name, recovered[0].d_out, recovered[0].d_in);
  lorafuse::write_adapter(out + "/fused.lcra", container, idmap,
                          recovered[0].d_out, recovered[0].d_in, cfg.seed);
  return 0;
}

int cmd_eval(const Config& cfg, const std::string& out) {
  const auto gen = lorafuse::gen_domains(cfg, cfg.seed);
  const auto fused_file = lorafuse::read_adapter(out + "/fused.lcra");
  const auto fused_update = lorafuse::materialize(fused_file.adapter);
  const auto fused_model =
      lorafuse::apply_fusion(gen.backbone, {{fused_update}});

  ordered_json in_domain = ordered_json::array();
  for (const auto& dom : gen.domains) {
    in_domain.push_back({{"domain", dom.domain_id},
                         {"base", lorafuse::evaluate(gen.backbone, dom.test)},
                         {"fused", lorafuse::evaluate(fused_model, dom.test)}});
  }
  ordered_json cross = ordered_json::array();
  double base_sum = 0.0, fused_sum = 0.0;
  for (const auto& task : gen.tasks) {
    const double b = lorafuse::evaluate(gen.backbone, task.test);
    const double f = lorafuse::evaluate(fused_model, task.test);
    base_sum += b;
    fused_sum += f;
    cross.push_back({{"domain_a", task.domain_a},
                     {"domain_b", task.domain_b},
                     {"base", b},
                     {"fused", f}});
  }
  double base_mean, fused_mean;
  if (!gen.tasks.empty()) {
    base_mean = base_sum / static_cast<double>(gen.tasks.size());
    fused_mean = fused_sum / static_cast<double>(gen.tasks.size());
  } else {
    // Single client: fall back to in-domain means.
    base_sum = fused_sum = 0.0;
    for (const auto& e : in_domain) {
      base_sum += e.at("base").get<double>();
      fused_sum += e.at("fused").get<double>();
    }
    base_mean = base_sum / static_cast<double>(in_domain.size());
    fused_mean = fused_sum / static_cast<double>(in_domain.size());
  }

  std::optional<double> mean_conflict;
  {
    std::ifstream in(out + "/conflict_report.json");
    if (in) {
      nlohmann::json doc = nlohmann::json::parse(in);
      mean_conflict = doc.at("mean_conflict").get<double>();
    }
  }

  ordered_json doc;
  doc["in_domain"] = in_domain;
  doc["cross_domain"] = cross;
  ordered_json summary = {{"base_mse", base_mean}, {"fused_mse", fused_mean}};
  if (mean_conflict) summary["mean_conflict"] = *mean_conflict;
  doc["summary"] = summary;
  lorafuse::write_json_file(out + "/eval.json", doc);

  if (mean_conflict) {
    std::printf("eval: base_mse=%.12g fused_mse=%.12g mean_conflict=%.12g\n",
                base_mean, fused_mean, *mean_conflict);
  } else {
    std::printf("eval: base_mse=%.12g fused_mse=%.12g mean_conflict=n/a\n",
                base_mean, fused_mean);
  }
  return 0;
}

int cmd_pipeline(const Config& cfg, const std::string& out) {
  const auto result = lorafuse::run_pipeline(cfg);
  const std::uint64_t init_seed =
      lorafuse::mix_seed(cfg.seed, lorafuse::seed_stream::kAdapterInit);

  for (std::size_t i = 0; i < result.trained.size(); ++i) {
    lorafuse::write_adapter(client_adapter_path(out, i), result.trained[i],
                            result.map, cfg.domains.d_out, cfg.domains.d_in,
                            init_seed);
  }
  const auto idmap = lorafuse::identity_map(
      lorafuse::kLayerName, cfg.domains.d_out, cfg.domains.d_in);
  for (std::size_t i = 0; i < result.recovered.size(); ++i) {
    lorafuse::write_adapter(recovered_path(out, i), result.recovered[i], idmap,
                            cfg.domains.d_out, cfg.domains.d_in, init_seed);
  }
  for (std::size_t i = 0; i < result.deconflicted.size(); ++i) {
    const auto refactored = lorafuse::refactor_update(
        result.deconflicted[i], lorafuse::kLayerName, cfg.cr.max_dirs);
    lorafuse::write_adapter(cr_path(out, i), refactored, idmap,
                            cfg.domains.d_out, cfg.domains.d_in, init_seed);
  }
  if (result.conflict_post) {
    ordered_json doc =
        lorafuse::conflict_to_json(result.conflict_pre, lorafuse::kLayerName);
    doc["post_cr_mean"] = result.conflict_post->mean_conflict;
    doc["post_cr_per_direction"] = result.conflict_post->conflict;
    lorafuse::write_json_file(out + "/conflict_report.json", doc);
  }
  const auto container =
      dense_update_container(lorafuse::kLayerName,
                             result.fused_cr ? *result.fused_cr : result.fused);
  lorafuse::write_adapter(out + "/fused.lcra", container, idmap,
                          cfg.domains.d_out, cfg.domains.d_in, cfg.seed);
  lorafuse::write_report(out + "/run_report.json", result.report);
  lorafuse::log_info("pipeline: report written to " + out + "/run_report.json");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"lorafuse: prune-train-recover LoRA fusion toolkit"};
  app.require_subcommand(1);

  struct Common {
    std::string config_path;
    std::string out_dir;
    std::optional<std::uint64_t> seed;
  };

  const std::vector<std::string> names = {"prune",  "train", "recover", "cr",
                                          "fuse",   "eval",  "pipeline"};
  const std::vector<std::string> descs = {
      "compute the structured prune map",
      "train one LoRA adapter per client on the pruned backbone",
      "zero-pad client adapters back to full dimensions",
      "run conflict resolution over the recovered adapters",
      "fuse adapters into a single update",
      "evaluate base vs fused model and print a one-line summary",
      "run every stage end to end and write the run report"};

  std::vector<std::shared_ptr<Common>> opts;
  for (std::size_t i = 0; i < names.size(); ++i) {
    auto common = std::make_shared<Common>();
    CLI::App* sub = app.add_subcommand(names[i], descs[i]);
    sub->add_option("--config", common->config_path, "config file (JSON)")
        ->required();
    sub->add_option("--out", common->out_dir,
                    "output dir (default: config output_dir)");
    sub->add_option("--seed", common->seed, "override the config seed");
    opts.push_back(common);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);  // prints usage to stderr
    return 1;
  }

  try {
    for (std::size_t i = 0; i < names.size(); ++i) {
      if (!app.get_subcommand(names[i])->parsed()) continue;
      Config cfg = lorafuse::load_config(opts[i]->config_path);
      if (opts[i]->seed) cfg.seed = *opts[i]->seed;
      lorafuse::validate_config(cfg);
      const std::string out =
          opts[i]->out_dir.empty() ? cfg.output_dir : opts[i]->out_dir;
      ensure_dir(out);
      switch (i) {
        case 0: return cmd_prune(cfg, out);
        case 1: return cmd_train(cfg, out);
        case 2: return cmd_recover(cfg, out);
        case 3: return cmd_cr(cfg, out);
        case 4: return cmd_fuse(cfg, out);
        case 5: return cmd_eval(cfg, out);
        case 6: return cmd_pipeline(cfg, out);
      }
    }
  } catch (const lorafuse::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 1;
  } catch (const lorafuse::Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 0;
}
