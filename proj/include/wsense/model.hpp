#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "wsense/layers.hpp"
#include "wsense/rng.hpp"
#include "wsense/tensor.hpp"

namespace wsense {

enum class Arch { cnn, cnn_se, cnn_wsense, convlstm, convlstm_se, convlstm_wsense };

inline constexpr Arch kAllArchs[] = {Arch::cnn,      Arch::cnn_se,      Arch::cnn_wsense,
                                     Arch::convlstm, Arch::convlstm_se, Arch::convlstm_wsense};

std::string_view to_string(Arch arch);
/// Parses "cnn", "cnn-se", "cnn-wsense", "convlstm", "convlstm-se", "convlstm-wsense".
std::optional<Arch> parse_arch(std::string_view name);

bool is_wsense(Arch arch);
bool is_convlstm(Arch arch);
/// Smallest window the architecture's pooling depth accepts.
std::size_t min_window(Arch arch);

struct BuildOptions {
  double bn_momentum = 0.99;
  double bn_epsilon = 1e-3;
  double dropout_rate = 0.5;
  std::size_t se_reduction = 8;
};

struct ModelSpec {
  Arch arch = Arch::cnn_wsense;
  std::size_t window_size = 0;
  std::size_t in_channels = 0;
  std::size_t n_classes = 0;
  std::uint64_t seed = 0;
  BuildOptions options;
  std::vector<LayerParams> layers;
};

/// CNN family: three blocks conv -> ReLU -> batchnorm -> maxpool(2) with
/// (kernel, channels) = (3, 32), (5, 64), (7, 128); then nothing / SE / WSense;
/// flatten, dropout, dense 512 ReLU, dense K softmax.
///
/// ConvLSTM family: four blocks with (1, 16), (3, 32), (5, 64), (7, 128);
/// LSTM 32 and LSTM 128 returning sequences; then flatten / SE + flatten /
/// WSense; dense 512 ReLU, dense K softmax.
ModelSpec build_model(Arch arch, std::size_t window_size, std::size_t in_channels,
                      std::size_t n_classes, std::uint64_t seed, const BuildOptions& options = {});

struct LayerAudit {
  std::string name;
  LayerKind kind;
  Shape output_shape;  // batch axis omitted
  ParamCount count;
};

struct ParamAudit {
  std::size_t total = 0;
  std::size_t trainable = 0;
  std::vector<LayerAudit> layers;
};

ParamAudit audit_params(const ModelSpec& m);

/// Class probabilities (B, K) for a batch (B, window, channels). Train mode
/// uses batch statistics and dropout (needs `rng`) but never updates
/// moving statistics.
Tensor forward(const ModelSpec& m, const Tensor& batch, Mode mode = Mode::infer,
               Rng* rng = nullptr);

/// Saved intermediates of one recorded forward pass and, after backward,
/// one gradient per model parameter (parameters() order).
struct GradTape {
  std::vector<LayerCache> caches;
  Tensor output;
  std::vector<Tensor> grads;
  bool recorded = false;

  void clear() { *this = GradTape{}; }
};

/// Recording forward. In train mode batchnorm moving statistics are updated.
Tensor forward(ModelSpec& m, const Tensor& batch, Mode mode, Rng* rng, GradTape& tape);

enum class GradientOf {
  probabilities,  // upstream gradient is dL/d(softmax output)
  logits,         // upstream gradient is dL/d(input of the final softmax)
};

/// Reverse pass; fills tape.grads (zeroed first). Throws StateError when the
/// tape holds no recorded forward.
void backward(const ModelSpec& m, GradTape& tape, const Tensor& upstream,
              GradientOf target = GradientOf::probabilities);

struct ParamRef {
  std::string path;  // "<layer index>.<layer name>.<weight>"
  NamedTensor* param;
};

std::vector<ParamRef> parameters(ModelSpec& m);
std::vector<const NamedTensor*> parameters(const ModelSpec& m);

TensorSet export_params(const ModelSpec& m);
/// Copies matching tensors into the model; throws FormatError on a missing
/// name or shape mismatch.
void import_params(ModelSpec& m, const TensorSet& set);

/// Writes `params.wsnt` (named tensor set) and `manifest.txt` into `dir`.
void save_checkpoint(const ModelSpec& m, const std::filesystem::path& dir);
ModelSpec load_checkpoint(const std::filesystem::path& dir);

}  // namespace wsense
