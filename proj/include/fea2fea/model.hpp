#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "fea2fea/autodiff.hpp"
#include "fea2fea/concat.hpp"
#include "fea2fea/graph.hpp"
#include "fea2fea/graph_ops.hpp"
#include "fea2fea/layers.hpp"
#include "fea2fea/random.hpp"

namespace fea2fea {

/// Shape of the message-passing stack and classifier head.
struct LayerConfig {
  ConvType conv_type = ConvType::gin;
  std::size_t in_dim = 1;
  std::size_t hidden_dim = 64;
  std::size_t out_dim = 2;
  std::size_t depth = 2;
  double dropout_p = 0.0;
  bool use_batchnorm = false;
  bool use_skip = false;
  double bn_momentum = 1.0;  // running stats follow the latest full batch

  void validate() const {
    if (depth < 1) throw UsageError("model depth must be at least 1");
    if (dropout_p < 0.0 || dropout_p >= 1.0) throw UsageError("dropout probability must lie in [0, 1)");
    if (in_dim == 0 || hidden_dim == 0 || out_dim == 0) throw UsageError("layer dimensions must be positive");
    if (!(bn_momentum > 0.0 && bn_momentum <= 1.0)) throw UsageError("batchnorm momentum must lie in (0, 1]");
  }
};

/// Feature-prediction model: two GIN layers with batchnorm and a residual
/// connection, hidden width 64.
inline LayerConfig default_prediction_layers() {
  LayerConfig c;
  c.use_batchnorm = true;
  c.use_skip = true;
  return c;
}

enum class Readout { none, mean, sum };

inline std::string_view to_string(Readout r) {
  switch (r) {
    case Readout::none: return "none";
    case Readout::mean: return "mean";
    case Readout::sum: return "sum";
  }
  return "?";
}

inline Readout parse_readout(std::string_view s) {
  if (s == "none") return Readout::none;
  if (s == "mean") return Readout::mean;
  if (s == "sum") return Readout::sum;
  throw UsageError("unknown readout '" + std::string(s) + "'");
}

/// Full model description. When `num_structural > 0`, each structural
/// column is embedded by its own Linear-ReLU-Linear encoder (1 -> d -> d),
/// the embeddings are merged with `concat_method`, and the result is
/// joined with the initial features. Otherwise the raw initial features
/// feed the GNN directly. `layers.in_dim` is derived from the rest.
struct ModelConfig {
  LayerConfig layers;
  std::size_t num_structural = 0;
  std::size_t embed_dim = 64;
  ConcatMethod concat_method = ConcatMethod::simple;
  std::size_t initial_dim = 0;
  Readout readout = Readout::none;

  std::size_t gnn_input_dim() const { return (num_structural ? num_structural * embed_dim : 0) + initial_dim; }
};

inline nlohmann::json to_json(const LayerConfig& c) {
  return {{"conv", std::string(to_string(c.conv_type))}, {"in_dim", c.in_dim},          {"hidden_dim", c.hidden_dim},
          {"out_dim", c.out_dim},                        {"depth", c.depth},            {"dropout", c.dropout_p},
          {"batchnorm", c.use_batchnorm},                {"skip", c.use_skip},
          {"bn_momentum", c.bn_momentum}};
}

inline LayerConfig layer_config_from_json(const nlohmann::json& j) {
  LayerConfig c;
  c.conv_type = parse_conv_type(j.at("conv").get<std::string>());
  c.in_dim = j.at("in_dim").get<std::size_t>();
  c.hidden_dim = j.at("hidden_dim").get<std::size_t>();
  c.out_dim = j.at("out_dim").get<std::size_t>();
  c.depth = j.at("depth").get<std::size_t>();
  c.dropout_p = j.at("dropout").get<double>();
  c.use_batchnorm = j.at("batchnorm").get<bool>();
  c.use_skip = j.at("skip").get<bool>();
  c.bn_momentum = j.value("bn_momentum", 1.0);
  return c;
}

inline nlohmann::json to_json(const ModelConfig& c) {
  return {{"layers", to_json(c.layers)},
          {"num_structural", c.num_structural},
          {"embed_dim", c.embed_dim},
          {"concat_method", std::string(to_string(c.concat_method))},
          {"initial_dim", c.initial_dim},
          {"readout", std::string(to_string(c.readout))}};
}

inline ModelConfig model_config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.layers = layer_config_from_json(j.at("layers"));
  c.num_structural = j.at("num_structural").get<std::size_t>();
  c.embed_dim = j.at("embed_dim").get<std::size_t>();
  c.concat_method = parse_concat_method(j.at("concat_method").get<std::string>());
  c.initial_dim = j.at("initial_dim").get<std::size_t>();
  c.readout = parse_readout(j.at("readout").get<std::string>());
  return c;
}

/// Inputs of one forward pass. `structural` is N x num_structural,
/// `initial` is N x initial_dim (either may have zero columns). For graph
/// readout, `segments[u]` names the graph of node u.
struct ModelInput {
  const Graph* graph = nullptr;
  Tensor structural;
  Tensor initial;
  std::span<const std::uint32_t> segments;
  std::size_t num_segments = 0;

  std::size_t num_nodes() const { return graph ? graph->num_nodes() : 0; }
};

/// GNN classifier: [structural encoders + concatenation] -> depth x
/// (conv [-> batchnorm] -> relu [-> dropout]) with optional residuals ->
/// [readout] -> Linear-ReLU-Linear head -> log_softmax.
///
/// With ConvType::mlp the conv stack is skipped entirely and the head maps
/// the input straight to classes (the graph-free baseline).
class GnnModel {
 public:
  struct Output {
    Var log_probs;
    Var embedding;  // input of the classifier head
  };

  GnnModel(ModelConfig cfg, std::uint64_t seed) : cfg_(std::move(cfg)) {
    cfg_.layers.in_dim = cfg_.gnn_input_dim();
    cfg_.layers.validate();
    Rng rng(seed);
    const std::size_t h = cfg_.layers.hidden_dim;
    for (std::size_t j = 0; j < cfg_.num_structural; ++j) {
      const std::string name = "encoder" + std::to_string(j);
      encoders_.push_back({Linear::create(store_, name + ".0", 1, cfg_.embed_dim, rng), Linear::create(store_, name + ".1", cfg_.embed_dim, cfg_.embed_dim, rng)});
    }
    if (cfg_.num_structural > 1) {
      concat_ = ConcatLayer::create(store_, "concat", cfg_.concat_method, cfg_.num_structural, cfg_.embed_dim, rng);
    }
    std::size_t width = cfg_.layers.in_dim;
    if (cfg_.layers.conv_type != ConvType::mlp) {
      for (std::size_t l = 0; l < cfg_.layers.depth; ++l) {
        const std::string name = "conv" + std::to_string(l);
        Block blk;
        blk.conv = Conv::create(cfg_.layers.conv_type, store_, name, width, h, rng);
        if (cfg_.layers.use_batchnorm) {
          blk.norm = BatchNorm{store_.add(name + ".bn.gamma", Tensor({h}, 1.0)), store_.add(name + ".bn.beta", Tensor({h}, 0.0)), bn_stats_.size()};
          bn_stats_.emplace_back();
          bn_stats_.back().momentum = cfg_.layers.bn_momentum;
        }
        blocks_.push_back(blk);
        width = h;
      }
    }
    head0_ = Linear::create(store_, "head.0", width, h, rng);
    head1_ = Linear::create(store_, "head.1", h, cfg_.layers.out_dim, rng);
  }

  const ModelConfig& config() const noexcept { return cfg_; }
  ParameterStore& parameters() noexcept { return store_; }
  const ParameterStore& parameters() const noexcept { return store_; }
  std::vector<BatchNormStats>& batchnorm_stats() noexcept { return bn_stats_; }
  const std::vector<BatchNormStats>& batchnorm_stats() const noexcept { return bn_stats_; }

  /// Augmented node features: encoded structural columns merged by the
  /// concatenation method, then joined with the initial features.
  Var encode(Binding& b, const ModelInput& in) const {
    Tape& tape = b.tape();
    const std::size_t n = in.num_nodes();
    check_input(in);
    std::vector<Var> parts;
    if (cfg_.num_structural > 0) {
      std::vector<Var> embeddings;
      for (std::size_t j = 0; j < cfg_.num_structural; ++j) {
        Tensor col({n, 1});
        for (std::size_t r = 0; r < n; ++r) col.data[r] = in.structural(r, j);
        Var e = encoders_[j].second(b, relu(encoders_[j].first(b, tape.constant(std::move(col)))));
        embeddings.push_back(e);
      }
      parts.push_back(cfg_.num_structural > 1 ? concat_(b, embeddings) : embeddings[0]);
    }
    if (cfg_.initial_dim > 0) parts.push_back(tape.constant(in.initial));
    return parts.size() == 1 ? parts[0] : concat(parts, 1);
  }

  Output forward(Tape& tape, const ModelInput& in, bool train, Rng& rng) {
    Binding b(tape, store_);
    Var h = encode(b, in);
    const double p = cfg_.layers.dropout_p;
    for (std::size_t l = 0; l < blocks_.size(); ++l) {
      const Block& blk = blocks_[l];
      Var y = blk.conv(b, h, *in.graph);
      if (blk.norm) y = (*blk.norm)(b, y, bn_stats_, train);
      y = dropout(relu(y), p, train, rng);
      h = (cfg_.layers.use_skip && l > 0) ? add(y, h) : y;
    }
    if (cfg_.readout == Readout::mean) h = segment_mean(h, in.segments, in.num_segments);
    if (cfg_.readout == Readout::sum) h = segment_sum(h, in.segments, in.num_segments);
    Var z = dropout(relu(head0_(b, h)), p, train, rng);
    return {log_softmax(head1_(b, z), 1), h};
  }

 private:
  struct Encoder {
    Linear first;
    Linear second;
  };
  struct Block {
    Conv conv;
    std::optional<BatchNorm> norm;
  };

  void check_input(const ModelInput& in) const {
    if (!in.graph) throw UsageError("model input has no graph");
    const std::size_t n = in.num_nodes();
    if (cfg_.num_structural > 0 && (in.structural.rank() != 2 || in.structural.rows() != n || in.structural.cols() != cfg_.num_structural)) {
      throw ShapeError("structural input " + in.structural.shape_string() + " does not match " + std::to_string(n) + " x " + std::to_string(cfg_.num_structural));
    }
    if (cfg_.initial_dim > 0 && (in.initial.rank() != 2 || in.initial.rows() != n || in.initial.cols() != cfg_.initial_dim)) {
      throw ShapeError("initial input " + in.initial.shape_string() + " does not match " + std::to_string(n) + " x " + std::to_string(cfg_.initial_dim));
    }
    if (cfg_.readout != Readout::none && in.segments.size() != n) throw ShapeError("graph readout needs one segment id per node");
  }

  ModelConfig cfg_;
  ParameterStore store_;
  std::vector<BatchNormStats> bn_stats_;
  std::vector<Encoder> encoders_;
  ConcatLayer concat_;
  std::vector<Block> blocks_;
  Linear head0_;
  Linear head1_;
};

// ---------------------------------------------------------------------------
// Checkpoints
//
// JSON document:
//   { "format": "fea2fea-checkpoint", "version": 1,
//     "config": <ModelConfig>,
//     "parameters": [ {"name": str, "shape": [int...], "data": [real...]}, ... ],
//     "batchnorm":  [ {"running_mean": [...], "running_var": [...]}, ... ] }
// Parameters appear in construction order; names are unique.

inline constexpr int kCheckpointVersion = 1;

inline nlohmann::json checkpoint_json(const GnnModel& model) {
  nlohmann::json params = nlohmann::json::array();
  for (const auto& p : model.parameters().all()) params.push_back({{"name", p.name}, {"shape", p.value.shape}, {"data", p.value.data}});
  nlohmann::json bn = nlohmann::json::array();
  for (const auto& s : model.batchnorm_stats()) bn.push_back({{"running_mean", s.running_mean}, {"running_var", s.running_var}});
  return {{"format", "fea2fea-checkpoint"}, {"version", kCheckpointVersion}, {"config", to_json(model.config())}, {"parameters", params}, {"batchnorm", bn}};
}

inline GnnModel model_from_checkpoint(const nlohmann::json& j) {
  if (j.value("format", "") != "fea2fea-checkpoint") throw ParseError("not a fea2fea checkpoint");
  if (j.value("version", 0) != kCheckpointVersion) throw ParseError("unsupported checkpoint version " + std::to_string(j.value("version", 0)));
  GnnModel model(model_config_from_json(j.at("config")), 0);
  auto& store = model.parameters();
  for (const auto& p : j.at("parameters")) {
    const auto name = p.at("name").get<std::string>();
    auto idx = store.find(name);
    if (!idx) throw ParseError("checkpoint parameter '" + name + "' does not belong to the model");
    Tensor t(p.at("shape").get<std::vector<std::size_t>>(), p.at("data").get<std::vector<double>>());
    if (t.shape != store[*idx].value.shape) throw ParseError("checkpoint parameter '" + name + "' has shape " + t.shape_string());
    store[*idx].value = std::move(t);
  }
  const auto& bn = j.at("batchnorm");
  if (bn.size() != model.batchnorm_stats().size()) throw ParseError("checkpoint batchnorm state does not match the model");
  for (std::size_t i = 0; i < bn.size(); ++i) {
    model.batchnorm_stats()[i].running_mean = bn[i].at("running_mean").get<std::vector<double>>();
    model.batchnorm_stats()[i].running_var = bn[i].at("running_var").get<std::vector<double>>();
  }
  return model;
}

inline void save_checkpoint(const std::filesystem::path& path, const GnnModel& model) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << checkpoint_json(model).dump() << '\n';
}

inline GnnModel load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  return model_from_checkpoint(nlohmann::json::parse(in));
}

}  // namespace fea2fea
