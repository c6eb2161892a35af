// Command-line driver for the Fea2Fea pipeline.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "fea2fea.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace fea2fea;

namespace {

// ---------------------------------------------------------------------------
// Configuration keys

enum class Kind { text, count, real, flag, list };

struct Key {
  const char* name;
  Kind kind;
  const char* help;
};

constexpr Key kKeys[] = {
    {"source", Kind::text, "dataset source: synthetic | edge_list | tudataset | synthetic_graphs"},
    {"path", Kind::text, "edge-list file or TUDataset directory"},
    {"name", Kind::text, "TUDataset name (file prefix)"},
    {"labels", Kind::text, "node label file for an edge-list dataset"},
    {"node_features", Kind::text, "initial node feature matrix for an edge-list dataset"},
    {"split", Kind::text, "fixed node split file (train/val/test/- per line) instead of ratios"},
    {"nodes", Kind::count, "node count of a synthetic geometric graph"},
    {"radius", Kind::real, "connection radius of synthetic graphs (0 = default)"},
    {"graphs", Kind::count, "graph count of synthetic_graphs / synth"},
    {"min_nodes", Kind::count, "smallest synthetic graph (synthetic_graphs)"},
    {"max_nodes", Kind::count, "largest synthetic graph (synthetic_graphs)"},
    {"conv", Kind::text, "gcn | gin | sage | gat | mlp"},
    {"depth", Kind::count, "message-passing layers"},
    {"hidden", Kind::count, "hidden width"},
    {"dropout", Kind::real, "dropout probability"},
    {"batchnorm", Kind::flag, "batch normalization after each conv"},
    {"skip", Kind::flag, "residual connections"},
    {"bins", Kind::count, "number of bins for the predicted feature"},
    {"bin_strategy", Kind::text, "auto | equal_width | equal_frequency | zero_inflated"},
    {"input", Kind::text, "input feature of a pair sweep"},
    {"output", Kind::text, "output feature of a pair sweep"},
    {"target", Kind::text, "target feature of the multiple pipeline"},
    {"threshold", Kind::real, "redundancy threshold"},
    {"methods", Kind::list, "concatenation methods (simple, bilinear, ntn)"},
    {"correlation", Kind::text, "correlation.json to reuse instead of recomputing"},
    {"embed_dim", Kind::count, "structural embedding width"},
    {"members", Kind::list, "structural features used for augmentation"},
    {"method", Kind::text, "concatenation method for augmentation"},
    {"readout", Kind::text, "graph readout: mean | sum"},
    {"folds", Kind::count, "cross-validation folds (graph classification)"},
    {"export_embeddings", Kind::flag, "write pre-head node embeddings (node mode)"},
    {"seed", Kind::count, "root seed"},
    {"runs", Kind::count, "number of seeded repetitions"},
    {"epochs", Kind::count, "epoch budget"},
    {"patience", Kind::count, "early-stopping patience"},
    {"lr", Kind::real, "Adam learning rate"},
    {"weight_decay", Kind::real, "L2 weight decay"},
    {"train_ratio", Kind::real, "train fraction of nodes or graphs"},
    {"val_ratio", Kind::real, "validation fraction"},
    {"test_ratio", Kind::real, "test fraction"},
    {"param", Kind::text, "sweep parameter: bins | depth | threshold"},
    {"range", Kind::text, "sweep values: lo..hi[:step] or a comma list"},
};

const Key* find_key(std::string_view name) {
  for (const Key& k : kKeys) {
    if (name == k.name) return &k;
  }
  return nullptr;
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

bool kind_matches(Kind kind, const json& v) {
  switch (kind) {
    case Kind::text: return v.is_string();
    case Kind::count: return v.is_number_unsigned() || (v.is_number_integer() && v.get<long long>() >= 0);
    case Kind::real: return v.is_number();
    case Kind::flag: return v.is_boolean();
    case Kind::list:
      if (!v.is_array()) return false;
      for (const auto& e : v)
        if (!e.is_string()) return false;
      return true;
  }
  return false;
}

json from_flag(const Key& key, const std::string& raw) {
  try {
    switch (key.kind) {
      case Kind::text: return raw;
      case Kind::count: {
        if (raw.empty() || raw[0] == '-') throw std::invalid_argument(raw);
        std::size_t used = 0;
        const auto v = std::stoull(raw, &used);
        if (used != raw.size()) throw std::invalid_argument(raw);
        return v;
      }
      case Kind::real: {
        std::size_t used = 0;
        const double v = std::stod(raw, &used);
        if (used != raw.size()) throw std::invalid_argument(raw);
        return v;
      }
      case Kind::flag:
        if (raw == "true" || raw == "1" || raw == "on") return true;
        if (raw == "false" || raw == "0" || raw == "off") return false;
        throw std::invalid_argument(raw);
      case Kind::list: return split_list(raw);
    }
  } catch (const std::exception&) {
  }
  throw UsageError("invalid value '" + raw + "' for --" + std::string(key.name));
}

// Keys each command reads, with its defaults.
json command_defaults(const std::string& cmd) {
  json base = {{"source", "synthetic"}, {"path", ""},   {"name", ""},       {"labels", ""},          {"node_features", ""},          {"split", ""},
               {"nodes", 400},          {"radius", 0.0}, {"graphs", 200},   {"min_nodes", 20},       {"max_nodes", 40},
               {"seed", 0},             {"train_ratio", 0.6}, {"val_ratio", 0.2}, {"test_ratio", 0.2}};
  const json training = {{"runs", 3}, {"epochs", 200}, {"patience", 20}, {"lr", 0.01}, {"weight_decay", 5e-4}};
  const json prediction = {{"conv", "gin"}, {"depth", 2}, {"hidden", 64}, {"dropout", 0.0}, {"batchnorm", true}, {"skip", true}, {"bins", 6}, {"bin_strategy", "auto"}};
  auto merge = [&](const json& extra) {
    for (auto it = extra.begin(); it != extra.end(); ++it) base[it.key()] = it.value();
  };
  if (cmd == "features") {
    base.erase("train_ratio");
    base.erase("val_ratio");
    base.erase("test_ratio");
    base.erase("split");
  } else if (cmd == "single") {
    merge(training);
    merge(prediction);
  } else if (cmd == "multiple") {
    merge(training);
    merge(prediction);
    merge({{"target", "pr"}, {"threshold", 0.85}, {"methods", {"simple", "bilinear", "ntn"}}, {"correlation", ""}, {"embed_dim", 64}});
  } else if (cmd == "classify") {
    merge(training);
    merge({{"conv", "gin"}, {"depth", 3}, {"hidden", 64}, {"dropout", 0.6}, {"batchnorm", true}, {"skip", true}, {"members", json::array()},
           {"method", "simple"}, {"readout", "mean"}, {"embed_dim", 64}, {"folds", 10}, {"export_embeddings", false}});
  } else if (cmd == "synth") {
    base = {{"nodes", 400}, {"radius", 0.0}, {"graphs", 1}, {"seed", 0}};
  } else if (cmd == "sweep") {
    merge(training);
    merge(prediction);
    merge({{"param", "bins"}, {"range", "2..10"}, {"input", "pr"}, {"output", "avglen"}, {"target", "pr"}, {"correlation", ""}, {"embed_dim", 64}});
  }
  return base;
}

/// Resolves defaults <- config file <- flags. Unknown keys in the file are
/// errors; known keys the command does not use are ignored.
json resolve_config(const std::string& cmd, const std::string& file, const std::map<std::string, std::string>& flags) {
  json cfg = command_defaults(cmd);
  auto apply = [&](const std::string& name, const json& value, const char* origin) {
    const Key* key = find_key(name);
    if (!key) throw UsageError(std::string(origin) + ": unknown config key '" + name + "'");
    if (!kind_matches(key->kind, value)) throw UsageError(std::string(origin) + ": wrong type for '" + name + "'");
    if (cfg.contains(name)) cfg[name] = value;
  };
  if (!file.empty()) {
    std::ifstream in(file);
    if (!in) throw UsageError("cannot open config file " + file);
    json doc;
    try {
      doc = json::parse(in);
    } catch (const json::parse_error& e) {
      throw UsageError("config file " + file + ": " + e.what());
    }
    if (!doc.is_object()) throw UsageError("config file must hold a flat JSON object");
    for (auto it = doc.begin(); it != doc.end(); ++it) apply(it.key(), it.value(), "config file");
  }
  for (const auto& [name, raw] : flags) {
    const Key* key = find_key(name);
    if (!key) throw UsageError("unknown option --" + name);
    if (!cfg.contains(name)) throw UsageError("option --" + name + " does not apply to '" + cmd + "'");
    cfg[name] = from_flag(*key, raw);
  }
  return cfg;
}

// ---------------------------------------------------------------------------
// Helpers over a resolved config

std::size_t count_of(const json& cfg, const char* k) { return cfg.at(k).get<std::size_t>(); }
double real_of(const json& cfg, const char* k) { return cfg.at(k).get<double>(); }
std::string text_of(const json& cfg, const char* k) { return cfg.at(k).get<std::string>(); }

std::size_t feature_of(const json& cfg, const char* k) {
  const auto name = text_of(cfg, k);
  const auto idx = feature_index(name);
  if (!idx) throw UsageError("unknown feature '" + name + "' for " + k);
  return *idx;
}

std::optional<double> radius_of(const json& cfg) {
  const double r = real_of(cfg, "radius");
  if (r < 0.0) throw UsageError("radius must be non-negative");
  return r > 0.0 ? std::optional<double>(r) : std::nullopt;
}

/// Seeds of the repeated runs: seed_r = derive_seed(root, r).
std::vector<std::uint64_t> run_seeds(const json& cfg) {
  const std::size_t runs = count_of(cfg, "runs");
  if (runs == 0) throw UsageError("runs must be at least 1");
  std::vector<std::uint64_t> seeds;
  for (std::size_t r = 0; r < runs; ++r) seeds.push_back(derive_seed(cfg.at("seed").get<std::uint64_t>(), r));
  return seeds;
}

TrainOptions train_options(const json& cfg) {
  TrainOptions t;
  t.epochs = count_of(cfg, "epochs");
  t.patience = count_of(cfg, "patience");
  t.adam.lr = real_of(cfg, "lr");
  t.adam.weight_decay = real_of(cfg, "weight_decay");
  if (t.epochs == 0) throw UsageError("epochs must be at least 1");
  return t;
}

LayerConfig layer_config(const json& cfg) {
  LayerConfig l;
  l.conv_type = parse_conv_type(text_of(cfg, "conv"));
  l.depth = count_of(cfg, "depth");
  l.hidden_dim = count_of(cfg, "hidden");
  l.dropout_p = real_of(cfg, "dropout");
  l.use_batchnorm = cfg.at("batchnorm").get<bool>();
  l.use_skip = cfg.at("skip").get<bool>();
  l.validate();
  return l;
}

std::optional<BinStrategy> strategy_of(const json& cfg) {
  const auto s = text_of(cfg, "bin_strategy");
  if (s == "auto") return std::nullopt;
  return parse_bin_strategy(s);
}

SplitRatios ratios_of(const json& cfg) {
  SplitRatios r{real_of(cfg, "train_ratio"), real_of(cfg, "val_ratio"), real_of(cfg, "test_ratio")};
  if (r.train <= 0 || r.val < 0 || r.test <= 0) throw UsageError("split ratios must be positive (validation may be zero)");
  return r;
}

bool is_collection(const json& cfg) {
  const auto s = text_of(cfg, "source");
  if (s == "tudataset" || s == "synthetic_graphs") return true;
  if (s == "synthetic" || s == "edge_list") return false;
  throw UsageError("unknown source '" + s + "'");
}

NodeDataset load_nodes(const json& cfg, bool need_labels) {
  NodeDataset ds;
  const auto s = text_of(cfg, "source");
  const std::uint64_t seed = cfg.at("seed").get<std::uint64_t>();
  if (s == "synthetic") {
    if (need_labels) throw UsageError("a synthetic node graph has no labels; use edge_list with labels, tudataset or synthetic_graphs");
    ds.graph = generate_random_geometric(count_of(cfg, "nodes"), radius_of(cfg), seed);
  } else {
    const auto path = text_of(cfg, "path");
    if (path.empty()) throw UsageError("source edge_list needs path");
    ds.graph = load_edge_list(path, read_edge_list_header(path));
    if (!text_of(cfg, "labels").empty()) {
      ds.node_labels = load_node_labels(text_of(cfg, "labels"));
      if (ds.node_labels.size() != ds.num_nodes()) throw DataError("label file has " + std::to_string(ds.node_labels.size()) + " rows for " + std::to_string(ds.num_nodes()) + " nodes");
    } else if (need_labels) {
      throw UsageError("node classification needs labels");
    }
    if (cfg.contains("node_features") && !text_of(cfg, "node_features").empty()) {
      ds.initial_node_features = load_matrix(text_of(cfg, "node_features"));
      if (ds.initial_node_features.rows != ds.num_nodes()) throw DataError("node feature rows do not match node count");
    }
  }
  if (ds.initial_node_features.rows == 0) ds.initial_node_features = Matrix(ds.num_nodes(), 0);
  if (cfg.contains("split") && !text_of(cfg, "split").empty()) {
    if (s == "synthetic") throw UsageError("a fixed split needs an edge_list source");
    load_split_masks(text_of(cfg, "split"), ds);
  } else if (cfg.contains("train_ratio")) {
    ds = node_split(std::move(ds), ratios_of(cfg), derive_seed(seed, 0x5B17));
  }
  return ds;
}

GraphCollection load_collection(const json& cfg) {
  const auto s = text_of(cfg, "source");
  if (s == "tudataset") {
    if (text_of(cfg, "path").empty() || text_of(cfg, "name").empty()) throw UsageError("source tudataset needs path and name");
    return load_tudataset(text_of(cfg, "path"), text_of(cfg, "name"));
  }
  SyntheticGraphTask task;
  task.num_graphs = count_of(cfg, "graphs");
  task.min_nodes = count_of(cfg, "min_nodes");
  task.max_nodes = count_of(cfg, "max_nodes");
  if (auto r = radius_of(cfg)) task.min_radius = task.max_radius = *r;
  return make_degree_median_collection(task, cfg.at("seed").get<std::uint64_t>());
}

FeatureTaskData task_data(const json& cfg) {
  if (is_collection(cfg)) {
    return make_task_data(load_collection(cfg), ratios_of(cfg), derive_seed(cfg.at("seed").get<std::uint64_t>(), 0x5B17), text_of(cfg, "source"));
  }
  return make_task_data(load_nodes(cfg, false), text_of(cfg, "source"));
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
}

void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

std::string fixed(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

struct Context {
  std::string command;
  json config;
  fs::path out;
  std::size_t jobs = 1;
  bool resume = false;
};

/// True when a previous run with the same config already produced every
/// file in `outputs`.
bool up_to_date(const Context& ctx, std::initializer_list<const char*> outputs) {
  if (!ctx.resume) return false;
  const fs::path echo = ctx.out / "config.json";
  if (!fs::exists(echo)) return false;
  try {
    std::ifstream in(echo);
    const json prev = json::parse(in);
    if (prev.value("command", "") != ctx.command || prev.value("config", json()) != ctx.config) return false;
  } catch (const json::exception&) {
    return false;
  }
  for (const char* f : outputs) {
    if (!fs::exists(ctx.out / f)) return false;
  }
  return true;
}

void write_echo(const Context& ctx) {
  write_json(ctx.out / "config.json", {{"schema", "fea2fea-run-config"}, {"version", 1}, {"command", ctx.command}, {"config", ctx.config}});
}

// ---------------------------------------------------------------------------
// Commands

int cmd_features(const Context& ctx) {
  const auto& cfg = ctx.config;
  Matrix table;
  std::vector<std::string> header;
  if (is_collection(cfg)) {
    const auto c = load_collection(cfg);
    const auto f = build_feature_matrix(std::span<const Graph>(c.graphs));
    table = Matrix(f.num_nodes(), kNumFeatures + 1);
    std::size_t row = 0;
    for (std::size_t g = 0; g < c.size(); ++g) {
      for (std::size_t u = 0; u < c.graphs[g].num_nodes(); ++u, ++row) {
        table(row, 0) = static_cast<double>(g);
        for (std::size_t k = 0; k < kNumFeatures; ++k) table(row, k + 1) = f.values(row, k);
      }
    }
    header.push_back("graph");
  } else {
    table = build_feature_matrix(load_nodes(cfg, false).graph).values;
  }
  for (auto n : kFeatureNames) header.emplace_back(n);
  save_tsv(ctx.out / "features.tsv", table, header);
  write_echo(ctx);
  std::cout << "features: " << table.rows << " nodes x " << kNumFeatures << " features -> " << (ctx.out / "features.tsv").string() << "\n";
  return 0;
}

CorrelationMatrix compute_correlation(const json& cfg, const FeatureTaskData& data, std::size_t jobs) {
  CorrelationOptions opt;
  opt.model = layer_config(cfg);
  opt.num_bins = count_of(cfg, "bins");
  opt.strategy = strategy_of(cfg);
  opt.seeds = run_seeds(cfg);
  opt.train = train_options(cfg);
  opt.jobs = jobs;
  return build_correlation_matrix(data, opt);
}

int cmd_single(const Context& ctx) {
  if (up_to_date(ctx, {"correlation.csv", "correlation.json"})) {
    std::cout << "single: up to date in " << ctx.out.string() << "\n";
    return 0;
  }
  const auto data = task_data(ctx.config);
  const auto R = compute_correlation(ctx.config, data, ctx.jobs);
  std::ostringstream csv;
  write_correlation_csv(csv, R);
  write_text(ctx.out / "correlation.csv", csv.str());
  write_json(ctx.out / "correlation.json", to_json(R));
  write_echo(ctx);
  std::cout << "single: " << R.size << "x" << R.size << " matrix, " << R.metadata.at("trained_entries").get<std::size_t>() << " entries trained -> "
            << ctx.out.string() << "\n";
  return 0;
}

CorrelationMatrix correlation_for(const json& cfg, const FeatureTaskData& data, std::size_t jobs) {
  const auto path = text_of(cfg, "correlation");
  if (path.empty()) return compute_correlation(cfg, data, jobs);
  std::ifstream in(path);
  if (!in) throw DataError("cannot open correlation file " + path);
  try {
    return correlation_from_json(json::parse(in));
  } catch (const json::exception& e) {
    throw ParseError(path + ": " + e.what());
  }
}

MultiOptions multi_options(const json& cfg, std::size_t jobs) {
  MultiOptions opt;
  opt.model = layer_config(cfg);
  opt.embed_dim = count_of(cfg, "embed_dim");
  opt.num_bins = count_of(cfg, "bins");
  opt.strategy = strategy_of(cfg);
  opt.seeds = run_seeds(cfg);
  opt.train = train_options(cfg);
  opt.jobs = jobs;
  return opt;
}

int cmd_multiple(const Context& ctx) {
  if (up_to_date(ctx, {"combinations.json", "summary.csv"})) {
    std::cout << "multiple: up to date in " << ctx.out.string() << "\n";
    return 0;
  }
  const auto& cfg = ctx.config;
  const std::size_t target = feature_of(cfg, "target");
  if (target == 0) throw UsageError("the constant feature cannot be a target");
  std::vector<ConcatMethod> methods;
  for (const auto& m : cfg.at("methods")) methods.push_back(parse_concat_method(m.get<std::string>()));
  if (methods.empty()) throw UsageError("at least one concatenation method is required");
  const auto data = task_data(cfg);
  const auto R = correlation_for(cfg, data, ctx.jobs);
  if (R.size != data.features.values.cols) throw DataError("correlation matrix size does not match the feature count");
  const auto all = enumerate_combinations(R.size, target);
  const auto kept = filter_combinations(all, R, real_of(cfg, "threshold"));
  const auto results = run_combinations(kept, methods, data, multi_options(cfg, ctx.jobs));

  json surviving = json::array();
  for (const auto& c : kept) surviving.push_back(c.members);
  write_json(ctx.out / "combinations.json", {{"schema", "fea2fea-combinations"},
                                             {"version", 1},
                                             {"target", feature_label(target)},
                                             {"threshold", real_of(cfg, "threshold")},
                                             {"enumerated", all.size()},
                                             {"surviving", surviving},
                                             {"results", to_json(results)}});
  std::ostringstream csv;
  write_summary_csv(csv, summarize(results));
  write_text(ctx.out / "summary.csv", csv.str());
  write_echo(ctx);
  std::cout << "multiple: " << kept.size() << " of " << all.size() << " combinations survive t=" << real_of(cfg, "threshold") << ", " << results.size()
            << " results -> " << ctx.out.string() << "\n";
  return 0;
}

AugmentConfig augment_config(const json& cfg) {
  AugmentConfig a;
  for (const auto& m : cfg.at("members")) {
    const auto idx = feature_index(m.get<std::string>());
    if (!idx) throw UsageError("unknown feature '" + m.get<std::string>() + "' in members");
    a.members.push_back(*idx);
  }
  std::sort(a.members.begin(), a.members.end());
  if (std::adjacent_find(a.members.begin(), a.members.end()) != a.members.end()) throw UsageError("members repeat a feature");
  a.method = parse_concat_method(text_of(cfg, "method"));
  a.gnn = layer_config(cfg);
  a.readout = parse_readout(text_of(cfg, "readout"));
  a.embed_dim = count_of(cfg, "embed_dim");
  return a;
}

int cmd_classify(const Context& ctx) {
  if (up_to_date(ctx, {"report.json"})) {
    std::cout << "classify: up to date in " << ctx.out.string() << "\n";
    return 0;
  }
  const auto& cfg = ctx.config;
  const auto aug = augment_config(cfg);
  const auto seeds = run_seeds(cfg);
  const auto train = train_options(cfg);
  RunReport report;
  if (is_collection(cfg)) {
    GraphProtocol proto;
    proto.folds = count_of(cfg, "folds");
    if (proto.folds < 2) throw UsageError("folds must be at least 2");
    report = classify_graphs(load_collection(cfg), aug, seeds, train, proto, ctx.jobs, text_of(cfg, "source"));
    if (cfg.at("export_embeddings").get<bool>()) report.warnings.push_back("embedding export is available in node mode only");
  } else {
    const auto ds = load_nodes(cfg, true);
    report = classify_nodes(ds, aug, seeds, train, ctx.jobs, text_of(cfg, "source"));
    if (cfg.at("export_embeddings").get<bool>()) {
      std::vector<std::size_t> train_rows;
      for (std::size_t i = 0; i < ds.num_nodes(); ++i)
        if (ds.train_mask[i]) train_rows.push_back(i);
      const Matrix structural = aug.members.empty() ? Matrix{} : build_feature_matrix(ds.graph).values;
      const auto in = build_augmented_input(aug, ds.graph, structural, ds.initial_node_features, train_rows, ds.num_classes());
      Supervision sup{ds.node_labels, train_rows, {}, {}};
      for (std::size_t i = 0; i < ds.num_nodes(); ++i) {
        if (ds.val_mask[i]) sup.val.push_back(i);
        if (ds.test_mask[i]) sup.test.push_back(i);
      }
      GnnModel model(in.config, derive_seed(seeds[0], 0xA991));
      train_classifier(model, in.input, sup, train, seeds[0]);
      const Matrix e = export_embeddings(model, in.input);
      std::vector<std::string> header;
      for (std::size_t c = 0; c < e.cols; ++c) header.push_back("e" + std::to_string(c));
      save_tsv(ctx.out / "embeddings.tsv", e, header);
    }
  }
  for (const auto& w : report.warnings) std::cerr << "warning: " << w << "\n";
  write_json(ctx.out / "report.json", to_json(report));
  write_echo(ctx);
  std::cout << "classify: accuracy " << fixed(report.mean) << " +- " << fixed(report.stddev) << " over " << seeds.size() << " seeds -> "
            << ctx.out.string() << "\n";
  return 0;
}

int cmd_synth(const Context& ctx) {
  const auto& cfg = ctx.config;
  const std::size_t count = count_of(cfg, "graphs");
  if (count == 0) throw UsageError("graphs must be at least 1");
  const std::uint64_t seed = cfg.at("seed").get<std::uint64_t>();
  for (std::size_t i = 0; i < count; ++i) {
    const Graph g = generate_random_geometric(count_of(cfg, "nodes"), radius_of(cfg), count == 1 ? seed : derive_seed(seed, i));
    char name[48];
    if (count == 1) {
      std::snprintf(name, sizeof name, "graph.edges");
    } else {
      std::snprintf(name, sizeof name, "graph_%04zu.edges", i);
    }
    save_edge_list(ctx.out / name, g);
  }
  write_echo(ctx);
  std::cout << "synth: " << count << " geometric graph" << (count == 1 ? "" : "s") << " with " << count_of(cfg, "nodes") << " nodes -> " << ctx.out.string() << "\n";
  return 0;
}

std::vector<double> parse_range(const std::string& spec) {
  std::vector<double> out;
  const auto dots = spec.find("..");
  try {
    if (dots == std::string::npos) {
      for (const auto& item : split_list(spec)) out.push_back(std::stod(item));
    } else {
      const double lo = std::stod(spec.substr(0, dots));
      std::string rest = spec.substr(dots + 2);
      double step = 1.0;
      if (const auto colon = rest.find(':'); colon != std::string::npos) {
        step = std::stod(rest.substr(colon + 1));
        rest = rest.substr(0, colon);
      }
      const double hi = std::stod(rest);
      if (!(step > 0)) throw UsageError("range step must be positive");
      for (std::size_t i = 0;; ++i) {
        const double v = lo + static_cast<double>(i) * step;
        if (v > hi + 1e-9 * step) break;
        out.push_back(v);
      }
    }
  } catch (const std::logic_error&) {
    throw UsageError("invalid range '" + spec + "'");
  }
  if (out.empty()) throw UsageError("range '" + spec + "' is empty");
  return out;
}

std::string value_label(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

int cmd_sweep(const Context& ctx) {
  const auto& cfg = ctx.config;
  const auto param = text_of(cfg, "param");
  if (param != "bins" && param != "depth" && param != "threshold") throw UsageError("sweep param must be bins, depth or threshold");
  const auto values = parse_range(text_of(cfg, "range"));
  const auto data = task_data(cfg);
  const auto seeds = run_seeds(cfg);
  const auto train = train_options(cfg);
  const fs::path cells = ctx.out / "cells";
  fs::create_directories(cells);
  const std::string cfg_hash = config_hash(cfg);

  std::optional<CorrelationMatrix> R;
  std::ostringstream csv;
  csv << "param,value,mean,std,count,status\n";
  json rows = json::array();
  std::size_t failed = 0;
  for (double v : values) {
    const fs::path cell = cells / (param + "_" + value_label(v) + ".json");
    json result;
    if (ctx.resume && fs::exists(cell)) {
      try {
        std::ifstream in(cell);
        json prev = json::parse(in);
        if (prev.value("config_hash", "") == cfg_hash) result = std::move(prev);
      } catch (const json::exception&) {
      }
    }
    if (result.is_null()) {
      result = {{"param", param}, {"value", v}, {"config_hash", cfg_hash}};
      try {
        std::vector<double> accs;
        if (param == "threshold") {
          if (!R) R = correlation_for(cfg, data, ctx.jobs);
          const std::size_t target = feature_of(cfg, "target");
          const auto kept = filter_combinations(enumerate_combinations(R->size, target), *R, v);
          for (const auto& r : run_combinations(kept, {ConcatMethod::simple}, data, multi_options(cfg, ctx.jobs))) accs.push_back(r.accuracy);
        } else {
          const double rounded = std::round(v);
          if (v < 1 || std::abs(v - rounded) > 1e-9) throw UsageError(param + " must be a positive integer");
          LayerConfig model = layer_config(cfg);
          std::size_t bins = count_of(cfg, "bins");
          (param == "bins" ? bins : model.depth) = static_cast<std::size_t>(rounded);
          const std::size_t in_f = feature_of(cfg, "input"), out_f = feature_of(cfg, "output");
          std::vector<double> per_seed(seeds.size());
          bool excluded = false;
          parallel_for(seeds.size(), ctx.jobs, [&](std::size_t s) {
            PairTask task{in_f, out_f, binning_for(out_f, bins, strategy_of(cfg)), model, derive_seed(seeds[s], in_f, out_f), train};
            const auto o = train_pair(task, data);
            if (o.excluded) excluded = true;
            per_seed[s] = o.accuracy;
          });
          if (excluded) throw BinningError("output feature cannot be binned with " + std::to_string(bins) + " bins");
          accs = per_seed;
        }
        const auto ms = mean_std(accs);
        result["mean"] = ms.mean;
        result["std"] = ms.std;
        result["count"] = accs.size();
        result["status"] = "ok";
      } catch (const Error& e) {
        result["mean"] = nullptr;
        result["std"] = nullptr;
        result["count"] = 0;
        result["status"] = std::string("error: ") + e.what();
      }
      write_json(cell, result);
    }
    const bool ok = result.value("status", "") == "ok";
    failed += !ok;
    std::string status = result.value("status", "");
    std::replace(status.begin(), status.end(), ',', ';');
    csv << param << ',' << value_label(v) << ',' << (ok ? fixed(result["mean"].get<double>()) : "NA") << ','
        << (ok ? fixed(result["std"].get<double>()) : "NA") << ',' << result.value("count", 0) << ',' << status << '\n';
    rows.push_back(result);
  }
  write_text(ctx.out / "sweep.csv", csv.str());
  write_json(ctx.out / "sweep.json", {{"schema", "fea2fea-sweep"}, {"version", 1}, {"param", param}, {"cells", rows}});
  write_echo(ctx);
  std::cout << "sweep: " << values.size() << " cells over " << param << ", " << failed << " failed -> " << ctx.out.string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
#if defined(__GLIBC__)
  // Keep large tensor buffers on the heap instead of fresh mappings.
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
#endif
  CLI::App app{"Fea2Fea: structural feature correlation on graphs"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "fea2fea 1.0.0");

  struct Sub {
    std::string name;
    std::string help;
    std::function<int(const Context&)> run;
  };
  const std::vector<Sub> subs = {
      {"features", "compute the structural feature matrix", cmd_features},
      {"single", "learn the feature-to-feature correlation matrix", cmd_single},
      {"multiple", "predict a target from filtered feature combinations", cmd_multiple},
      {"classify", "node or graph classification with structural augmentation", cmd_classify},
      {"synth", "generate random geometric graphs as edge lists", cmd_synth},
      {"sweep", "vary bins, depth or threshold over a range", cmd_sweep},
  };

  std::string config_file, out_dir = "run";
  std::size_t jobs = default_jobs();
  bool resume = false;
  std::map<std::string, std::string> flags;
  std::vector<CLI::App*> handles;
  for (const auto& s : subs) {
    CLI::App* sub = app.add_subcommand(s.name, s.help);
    sub->add_option("--config", config_file, "flat JSON config file");
    sub->add_option("--out", out_dir, "output directory")->capture_default_str();
    sub->add_option("--jobs", jobs, "worker threads")->capture_default_str()->check(CLI::PositiveNumber);
    sub->add_flag("--resume", resume, "reuse finished outputs of the same config");
    const json defaults = command_defaults(s.name);
    for (const Key& k : kKeys) {
      if (!defaults.contains(k.name)) continue;
      std::string flag = "--" + std::string(k.name);
      std::replace(flag.begin(), flag.end(), '_', '-');
      const std::string name = k.name;
      sub->add_option_function<std::string>(flag, [&flags, name](const std::string& v) { flags[name] = v; }, k.help);
    }
    handles.push_back(sub);
  }
  // Short aliases used in examples.
  handles[4]->add_option_function<std::string>("-n", [&flags](const std::string& v) { flags["nodes"] = v; }, "alias of --nodes");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : static_cast<int>(ExitCode::usage);
  }

  for (std::size_t i = 0; i < subs.size(); ++i) {
    if (!handles[i]->parsed()) continue;
    try {
      Context ctx;
      ctx.command = subs[i].name;
      ctx.config = resolve_config(subs[i].name, config_file, flags);
      ctx.out = out_dir;
      ctx.jobs = jobs;
      ctx.resume = resume;
      fs::create_directories(ctx.out);
      return subs[i].run(ctx);
    } catch (const Error& e) {
      std::cerr << "fea2fea " << subs[i].name << ": " << e.what() << "\n";
      return static_cast<int>(e.exit_code());
    } catch (const fs::filesystem_error& e) {
      std::cerr << "fea2fea " << subs[i].name << ": " << e.what() << "\n";
      return static_cast<int>(ExitCode::data);
    }
  }
  return static_cast<int>(ExitCode::usage);
}
