#include "wsense/model.hpp"

#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>

#include "wsense/attention.hpp"
#include "wsense/errors.hpp"

namespace wsense {

std::string_view to_string(Arch arch) {
  switch (arch) {
    case Arch::cnn: return "cnn";
    case Arch::cnn_se: return "cnn-se";
    case Arch::cnn_wsense: return "cnn-wsense";
    case Arch::convlstm: return "convlstm";
    case Arch::convlstm_se: return "convlstm-se";
    case Arch::convlstm_wsense: return "convlstm-wsense";
  }
  return "?";
}

std::optional<Arch> parse_arch(std::string_view name) {
  for (Arch a : kAllArchs)
    if (to_string(a) == name) return a;
  return std::nullopt;
}

bool is_wsense(Arch arch) { return arch == Arch::cnn_wsense || arch == Arch::convlstm_wsense; }

bool is_convlstm(Arch arch) {
  return arch == Arch::convlstm || arch == Arch::convlstm_se || arch == Arch::convlstm_wsense;
}

std::size_t min_window(Arch arch) { return is_convlstm(arch) ? 32 : 16; }

namespace {

struct ConvBlock {
  std::size_t kernel;
  std::size_t channels;
};

constexpr ConvBlock kCnnBlocks[] = {{3, 32}, {5, 64}, {7, 128}};
constexpr ConvBlock kConvLstmBlocks[] = {{1, 16}, {3, 32}, {5, 64}, {7, 128}};
constexpr std::size_t kHiddenUnits = 512;

class Builder {
 public:
  explicit Builder(ModelSpec& m) : m_(m) {}

  void add(LayerParams p) {
    const std::string base = p.name;
    const std::size_t n = ++counts_[base];
    p.name = base + "_" + std::to_string(n);
    for (auto& b : p.blocks) b.name = p.name + b.name.substr(b.name.find('.'));
    m_.layers.push_back(std::move(p));
  }

 private:
  ModelSpec& m_;
  std::map<std::string, std::size_t> counts_;
};

}  // namespace

ModelSpec build_model(Arch arch, std::size_t window_size, std::size_t in_channels,
                      std::size_t n_classes, std::uint64_t seed, const BuildOptions& options) {
  if (window_size < min_window(arch)) {
    throw ConfigError("window " + std::to_string(window_size) + " too small for " +
                      std::string(to_string(arch)) + " (minimum " +
                      std::to_string(min_window(arch)) + ")");
  }
  if (in_channels < 1) throw ConfigError("in_channels must be at least 1");
  if (n_classes < 2) throw ConfigError("n_classes must be at least 2");

  ModelSpec m;
  m.arch = arch;
  m.window_size = window_size;
  m.in_channels = in_channels;
  m.n_classes = n_classes;
  m.seed = seed;
  m.options = options;
  Builder b(m);

  const bool lstm = is_convlstm(arch);
  std::size_t channels = in_channels;
  std::size_t time = window_size;
  const std::span<const ConvBlock> blocks =
      lstm ? std::span<const ConvBlock>(kConvLstmBlocks) : std::span<const ConvBlock>(kCnnBlocks);
  for (const auto& blk : blocks) {
    b.add(make_conv1d(blk.kernel, channels, blk.channels));
    b.add(make_activation(Activation::relu));
    b.add(make_batchnorm1d(blk.channels, options.bn_momentum, options.bn_epsilon));
    b.add(make_maxpool1d(2));
    channels = blk.channels;
    time /= 2;
  }
  if (lstm) {
    b.add(make_lstm(channels, 32, true));
    b.add(make_lstm(32, 128, true));
    channels = 128;
  }

  std::size_t features = time * channels;
  switch (arch) {
    case Arch::cnn_se:
    case Arch::convlstm_se:
      b.add(make_se(channels, options.se_reduction));
      b.add(make_flatten());
      break;
    case Arch::cnn_wsense:
    case Arch::convlstm_wsense:
      b.add(make_wsense(channels));
      features = channels;
      break;
    default: b.add(make_flatten()); break;
  }
  if (!lstm) b.add(make_dropout(options.dropout_rate));
  b.add(make_dense(features, kHiddenUnits));
  b.add(make_activation(Activation::relu));
  b.add(make_dense(kHiddenUnits, n_classes));
  b.add(make_activation(Activation::softmax));

  Rng rng(seed);
  for (auto& layer : m.layers) initialize(layer, rng);
  return m;
}

ParamAudit audit_params(const ModelSpec& m) {
  ParamAudit audit;
  Shape shape{1, m.window_size, m.in_channels};
  for (const auto& layer : m.layers) {
    shape = output_shape(layer, shape);
    LayerAudit row{layer.name, layer.kind, Shape(shape.begin() + 1, shape.end()),
                   count_params(layer)};
    audit.total += row.count.total;
    audit.trainable += row.count.trainable;
    audit.layers.push_back(std::move(row));
  }
  return audit;
}

namespace {

void check_batch(const ModelSpec& m, const Tensor& batch) {
  if (batch.rank() != 3 || batch.extent(1) != m.window_size || batch.extent(2) != m.in_channels) {
    throw DimensionError("batch shape " + to_string(batch.shape()) + " does not match model input (B, " +
                         std::to_string(m.window_size) + ", " + std::to_string(m.in_channels) + ")");
  }
}

template <class Params, class Visit>
void walk_paths(Params& p, const std::string& prefix, Visit&& visit) {
  for (auto& w : p.weights) visit(prefix + "." + w.name, w);
  for (auto& b : p.blocks) {
    const auto dot = b.name.rfind('.');
    walk_paths(b, prefix + "." + b.name.substr(dot == std::string::npos ? 0 : dot + 1), visit);
  }
}

std::string layer_prefix(std::size_t index, const LayerParams& p) {
  std::ostringstream os;
  os << std::setw(2) << std::setfill('0') << index << '.' << p.name;
  return os.str();
}

}  // namespace

Tensor forward(const ModelSpec& m, const Tensor& batch, Mode mode, Rng* rng) {
  check_batch(m, batch);
  Tensor x = batch;
  for (const auto& layer : m.layers) x = layer_forward(layer, x, mode, rng);
  return x;
}

Tensor forward(ModelSpec& m, const Tensor& batch, Mode mode, Rng* rng, GradTape& tape) {
  check_batch(m, batch);
  tape.clear();
  tape.caches.resize(m.layers.size());
  Tensor x = batch;
  for (std::size_t i = 0; i < m.layers.size(); ++i) {
    x = layer_forward(m.layers[i], x, mode, rng, &tape.caches[i]);
    if (mode == Mode::train) apply_moving_stats(m.layers[i], tape.caches[i]);
  }
  tape.output = x;
  tape.recorded = true;
  return x;
}

void backward(const ModelSpec& m, GradTape& tape, const Tensor& upstream, GradientOf target) {
  if (!tape.recorded) throw StateError("backward called before a recorded forward");
  if (upstream.shape() != tape.output.shape()) {
    throw DimensionError("upstream gradient " + to_string(upstream.shape()) + " vs output " +
                         to_string(tape.output.shape()));
  }
  std::vector<std::size_t> first(m.layers.size() + 1, 0);
  tape.grads.clear();
  for (std::size_t i = 0; i < m.layers.size(); ++i) {
    for (const NamedTensor* p : flatten_params(m.layers[i])) tape.grads.emplace_back(p->value.shape());
    first[i + 1] = tape.grads.size();
  }

  std::size_t last = m.layers.size();
  if (target == GradientOf::logits) {
    const auto& tail = m.layers.back();
    if (tail.kind != LayerKind::activation || tail.hyper.activation != Activation::softmax) {
      throw StateError("logit gradients need a model ending in softmax");
    }
    --last;
  }
  Tensor g = upstream;
  for (std::size_t i = last; i-- > 0;) {
    std::span<Tensor> grads(tape.grads.data() + first[i], first[i + 1] - first[i]);
    g = layer_backward(m.layers[i], tape.caches[i], g, grads);
  }
}

std::vector<ParamRef> parameters(ModelSpec& m) {
  std::vector<ParamRef> out;
  for (std::size_t i = 0; i < m.layers.size(); ++i) {
    walk_paths(m.layers[i], layer_prefix(i, m.layers[i]),
               [&](std::string path, NamedTensor& w) { out.push_back({std::move(path), &w}); });
  }
  return out;
}

std::vector<const NamedTensor*> parameters(const ModelSpec& m) {
  std::vector<const NamedTensor*> out;
  for (const auto& layer : m.layers)
    for (const NamedTensor* p : flatten_params(layer)) out.push_back(p);
  return out;
}

TensorSet export_params(const ModelSpec& m) {
  TensorSet set;
  for (std::size_t i = 0; i < m.layers.size(); ++i) {
    walk_paths(m.layers[i], layer_prefix(i, m.layers[i]),
               [&](std::string path, const NamedTensor& w) { set.emplace(std::move(path), w.value); });
  }
  return set;
}

void import_params(ModelSpec& m, const TensorSet& set) {
  for (auto& ref : parameters(m)) {
    auto it = set.find(ref.path);
    if (it == set.end()) throw FormatError("checkpoint lacks parameter " + ref.path);
    if (it->second.shape() != ref.param->value.shape()) {
      throw FormatError("checkpoint parameter " + ref.path + " has shape " +
                        to_string(it->second.shape()) + ", model expects " +
                        to_string(ref.param->value.shape()));
    }
    ref.param->value = it->second;
  }
}

void save_checkpoint(const ModelSpec& m, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  save_tensor_set(dir / "params.wsnt", export_params(m));
  std::ofstream out(dir / "manifest.txt");
  if (!out) throw IoError("cannot write manifest in " + dir.string());
  out << std::setprecision(17);
  out << "arch=" << to_string(m.arch) << '\n'
      << "window=" << m.window_size << '\n'
      << "channels=" << m.in_channels << '\n'
      << "classes=" << m.n_classes << '\n'
      << "seed=" << m.seed << '\n'
      << "bn_momentum=" << m.options.bn_momentum << '\n'
      << "bn_epsilon=" << m.options.bn_epsilon << '\n'
      << "dropout=" << m.options.dropout_rate << '\n'
      << "se_reduction=" << m.options.se_reduction << '\n';
}

ModelSpec load_checkpoint(const std::filesystem::path& dir) {
  std::ifstream in(dir / "manifest.txt");
  if (!in) throw IoError("cannot read manifest in " + dir.string());
  std::map<std::string, std::string> kv;
  for (std::string line; std::getline(in, line);) {
    const auto eq = line.find('=');
    if (eq != std::string::npos) kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  auto need = [&](const std::string& key) -> const std::string& {
    auto it = kv.find(key);
    if (it == kv.end()) throw FormatError("manifest lacks " + key);
    return it->second;
  };
  const auto arch = parse_arch(need("arch"));
  if (!arch) throw FormatError("unknown arch in manifest: " + need("arch"));
  BuildOptions opts;
  if (kv.count("bn_momentum")) opts.bn_momentum = std::stod(kv["bn_momentum"]);
  if (kv.count("bn_epsilon")) opts.bn_epsilon = std::stod(kv["bn_epsilon"]);
  if (kv.count("dropout")) opts.dropout_rate = std::stod(kv["dropout"]);
  if (kv.count("se_reduction")) opts.se_reduction = std::stoul(kv["se_reduction"]);
  ModelSpec m = build_model(*arch, std::stoul(need("window")), std::stoul(need("channels")),
                            std::stoul(need("classes")), std::stoull(need("seed")), opts);
  import_params(m, load_tensor_set(dir / "params.wsnt"));
  return m;
}

}  // namespace wsense
