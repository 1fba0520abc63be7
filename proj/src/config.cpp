#include "lorafuse/config.hpp"

#include <fstream>
#include <set>
#include <sstream>
#include <vector>

#include <json.hpp>

#include "lorafuse/error.hpp"
#include "lorafuse/fusion.hpp"

namespace lorafuse {

namespace {

using nlohmann::json;

// Collects every problem before throwing so a bad config is reported once,
// completely.
struct Problems {
  std::vector<std::string> items;
  void add(const std::string& p) { items.push_back(p); }
  void raise_if_any() const {
    if (items.empty()) return;
    std::ostringstream os;
    os << "invalid config (" << items.size() << " problem"
       << (items.size() == 1 ? "" : "s") << "):";
    for (const auto& p : items) os << "\n  - " << p;
    throw ConfigError(os.str());
  }
};

// Duplicate-key detection via the parser callback: nlohmann keeps the last
// occurrence silently, so track keys per object depth ourselves.
json parse_rejecting_duplicates(std::istream& in, Problems& problems) {
  std::vector<std::set<std::string>> key_stack;
  json::parser_callback_t cb = [&](int /*depth*/, json::parse_event_t event,
                                   json& parsed) {
    switch (event) {
      case json::parse_event_t::object_start:
        key_stack.emplace_back();
        break;
      case json::parse_event_t::object_end:
        key_stack.pop_back();
        break;
      case json::parse_event_t::key: {
        const auto key = parsed.get<std::string>();
        if (!key_stack.back().insert(key).second) {
          problems.add("duplicate key \"" + key + "\"");
        }
        break;
      }
      default:
        break;
    }
    return true;
  };
  return json::parse(in, cb);
}

struct Section {
  const json* obj;
  std::string prefix;
  Problems* problems;
  std::set<std::string> seen;

  Section(const json& o, std::string pfx, Problems& pr)
      : obj(&o), prefix(std::move(pfx)), problems(&pr) {}

  ~Section() {
    for (auto it = obj->begin(); it != obj->end(); ++it) {
      if (!seen.count(it.key())) {
        problems->add("unknown key \"" + prefix + it.key() + "\"");
      }
    }
  }

  const json* get(const std::string& key) {
    seen.insert(key);
    auto it = obj->find(key);
    return it == obj->end() ? nullptr : &*it;
  }

  template <typename T>
  void number(const std::string& key, T& out) {
    const json* v = get(key);
    if (v == nullptr) return;
    if (!v->is_number()) {
      problems->add("key \"" + prefix + key + "\" must be a number");
      return;
    }
    if constexpr (std::is_unsigned_v<T>) {
      if ((v->is_number_integer() && v->get<long long>() < 0) ||
          (v->is_number_float() && v->get<double>() < 0)) {
        problems->add("key \"" + prefix + key + "\" must be nonnegative");
        return;
      }
      if (v->is_number_float() &&
          v->get<double>() != static_cast<double>(v->get<T>())) {
        problems->add("key \"" + prefix + key + "\" must be an integer");
        return;
      }
    }
    out = v->get<T>();
  }

  void real(const std::string& key, double& out) {
    const json* v = get(key);
    if (v == nullptr) return;
    if (!v->is_number()) {
      problems->add("key \"" + prefix + key + "\" must be a number");
      return;
    }
    out = v->get<double>();
  }

  void boolean(const std::string& key, bool& out) {
    const json* v = get(key);
    if (v == nullptr) return;
    if (!v->is_boolean()) {
      problems->add("key \"" + prefix + key + "\" must be a boolean");
      return;
    }
    out = v->get<bool>();
  }

  void text(const std::string& key, std::string& out) {
    const json* v = get(key);
    if (v == nullptr) return;
    if (!v->is_string()) {
      problems->add("key \"" + prefix + key + "\" must be a string");
      return;
    }
    out = v->get<std::string>();
  }

  const json* object(const std::string& key) {
    const json* v = get(key);
    if (v == nullptr) return nullptr;
    if (!v->is_object()) {
      problems->add("key \"" + prefix + key + "\" must be an object");
      return nullptr;
    }
    return v;
  }
};

void collect_range_problems(const Config& cfg, Problems& problems) {
  if (cfg.num_clients < 1) problems.add("num_clients must be >= 1");
  if (cfg.domains.d_out == 0 || cfg.domains.d_in == 0) {
    problems.add("domains.d_out and domains.d_in must be >= 1");
  }
  if (cfg.domains.teacher_rank == 0) {
    problems.add("domains.teacher_rank must be >= 1");
  }
  if (cfg.domains.teacher_rank >
      std::min(cfg.domains.d_out, cfg.domains.d_in)) {
    problems.add("domains.teacher_rank exceeds min(d_out, d_in)");
  }
  if ((cfg.num_clients + 1) * cfg.domains.teacher_rank > cfg.domains.d_out) {
    problems.add(
        "domains.d_out too small: the overlap construction needs d_out >= "
        "(num_clients + 1) * teacher_rank");
  }
  if (!(cfg.domains.overlap >= 0.0 && cfg.domains.overlap <= 1.0)) {
    problems.add("domains.overlap must lie in [0,1]");
  }
  if (cfg.domains.noise_sigma < 0.0) {
    problems.add("domains.noise_sigma must be >= 0");
  }
  if (cfg.domains.train_samples == 0) {
    problems.add("domains.train_samples must be >= 1");
  }
  if (cfg.domains.test_samples == 0) {
    problems.add("domains.test_samples must be >= 1");
  }
  if (!(cfg.prune.ratio >= 0.0 && cfg.prune.ratio <= 1.0)) {
    problems.add("prune.ratio must lie in [0,1]");
  }
  if (cfg.lora.rank == 0) problems.add("lora.rank must be >= 1");
  if (!(cfg.lora.alpha > 0.0)) problems.add("lora.alpha must be > 0");
  if (!(cfg.train.lr > 0.0)) problems.add("train.lr must be > 0");
  if (cfg.fusion.method != "fedavg" && cfg.fusion.method != "ffa" &&
      cfg.fusion.method != "fedsa") {
    problems.add("fusion.method must be one of fedavg, ffa, fedsa");
  }
  if (cfg.cr.max_dirs == 0) problems.add("cr.max_dirs must be >= 1");
  if (!(cfg.cr.tol > 0.0)) problems.add("cr.tol must be > 0");
  if (cfg.eval.hardness_floor < 0.0) {
    problems.add("eval.hardness_floor must be >= 0");
  }
  if (cfg.output_dir.empty()) problems.add("output_dir must be nonempty");
}

}  // namespace

Config default_config(std::uint64_t seed) {
  Config cfg;
  cfg.seed = seed;
  return cfg;
}

void validate_config(const Config& cfg) {
  Problems problems;
  collect_range_problems(cfg, problems);
  problems.raise_if_any();
}

Config load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file: " + path);

  Problems problems;
  json doc;
  try {
    doc = parse_rejecting_duplicates(in, problems);
  } catch (const json::parse_error& e) {
    throw ConfigError("config is not valid JSON: " + std::string(e.what()));
  }
  problems.raise_if_any();
  if (!doc.is_object()) throw ConfigError("config root must be a JSON object");

  Config cfg;
  bool have_seed = false;
  {
    Section root(doc, "", problems);
    {
      const json* v = root.get("seed");
      if (v == nullptr) {
        problems.add("missing required key \"seed\"");
      } else if (!v->is_number_integer() || v->get<long long>() < 0) {
        problems.add("key \"seed\" must be a nonnegative integer");
      } else {
        cfg.seed = v->get<std::uint64_t>();
        have_seed = true;
      }
    }
    root.number("num_clients", cfg.num_clients);
    root.text("output_dir", cfg.output_dir);

    if (const json* o = root.object("domains")) {
      Section s(*o, "domains.", problems);
      s.number("d_out", cfg.domains.d_out);
      s.number("d_in", cfg.domains.d_in);
      s.number("teacher_rank", cfg.domains.teacher_rank);
      s.real("overlap", cfg.domains.overlap);
      s.real("noise_sigma", cfg.domains.noise_sigma);
      s.number("train_samples", cfg.domains.train_samples);
      s.number("test_samples", cfg.domains.test_samples);
    }
    if (const json* o = root.object("prune")) {
      Section s(*o, "prune.", problems);
      s.real("ratio", cfg.prune.ratio);
      s.number("calibration_size", cfg.prune.calibration_size);
    }
    if (const json* o = root.object("lora")) {
      Section s(*o, "lora.", problems);
      s.number("rank", cfg.lora.rank);
      s.real("alpha", cfg.lora.alpha);
    }
    if (const json* o = root.object("train")) {
      Section s(*o, "train.", problems);
      s.real("lr", cfg.train.lr);
      s.number("steps", cfg.train.steps);
    }
    if (const json* o = root.object("fusion")) {
      Section s(*o, "fusion.", problems);
      s.text("method", cfg.fusion.method);
      s.boolean("factor_avg", cfg.fusion.factor_avg);
    }
    if (const json* o = root.object("cr")) {
      Section s(*o, "cr.", problems);
      s.boolean("enabled", cfg.cr.enabled);
      s.number("max_dirs", cfg.cr.max_dirs);
      s.real("tol", cfg.cr.tol);
    }
    if (const json* o = root.object("eval")) {
      Section s(*o, "eval.", problems);
      s.real("hardness_floor", cfg.eval.hardness_floor);
    }
  }

  if (have_seed) collect_range_problems(cfg, problems);
  problems.raise_if_any();
  return cfg;
}

}  // namespace lorafuse
