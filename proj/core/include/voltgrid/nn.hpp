#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "voltgrid/rng.hpp"

namespace voltgrid {

struct MlpSpec {
  std::size_t input_dim = 1;
  std::vector<std::size_t> hidden;
  std::size_t n_actions = 1;
  bool dueling = true;

  bool operator==(const MlpSpec&) const = default;
};

/// Throws SpecMismatchError for a zero dimension.
void check(const MlpSpec& spec);
std::string describe(const MlpSpec& spec);

/// Weights are (out × in). Layers 0..H-1 form the ReLU trunk; layer H is the
/// advantage head (or the Q head without dueling); layer H+1 is the scalar
/// value head when dueling.
struct Parameters {
  MlpSpec spec;
  std::vector<Eigen::MatrixXd> weights;
  std::vector<Eigen::VectorXd> biases;

  std::size_t trunk_layers() const { return spec.hidden.size(); }
  std::size_t size() const;
  bool all_finite() const;
  /// Bitwise equality of every entry.
  bool operator==(const Parameters& other) const;
};

/// Uniform in ±sqrt(1 / fan_in), drawn layer by layer.
Parameters init_params(const MlpSpec& spec, Rng& rng);
Parameters zeros_like(const Parameters& params);

/// Rows of `obs` are observations; returns batch × n_actions.
Eigen::MatrixXd forward(const Parameters& params, const Eigen::MatrixXd& obs);

struct Gradients {
  Parameters grads;
  double loss = 0.0;
  Eigen::VectorXd td_error;  // Q(s, a) − target per example
};

/// Weighted Huber loss, averaged over the batch, between Q(s_i, a_i) and
/// targets_i, with its gradient. Throws on non-finite inputs.
Gradients backward(const Parameters& params, const Eigen::MatrixXd& obs,
                   const Eigen::VectorXd& weights, const std::vector<std::size_t>& actions,
                   const Eigen::VectorXd& targets, double huber_delta = 1.0);

/// Rescales in place so the global L2 norm is at most max_norm. Returns the
/// norm before clipping.
double clip_grad_norm(Parameters& grads, double max_norm);

struct AdamState {
  Parameters m;
  Parameters v;
  std::int64_t step = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

AdamState make_adam(const Parameters& params);
void adam_step(Parameters& params, const Parameters& grads, AdamState& state,
               double learning_rate);

/// Binary layout, little-endian: "VGNN", u32 version, spec header, tensors
/// as (u64 rows, u64 cols, f64 column-major data), u64 FNV-1a of all prior
/// bytes.
void save_params(const Parameters& params, const std::filesystem::path& path);
/// Throws CorruptFileError for damaged files and SpecMismatchError when
/// `expected` is given and differs from the stored spec.
Parameters load_params(const std::filesystem::path& path,
                       const std::optional<MlpSpec>& expected = std::nullopt);

void save_adam(const AdamState& state, const std::filesystem::path& path);
AdamState load_adam(const std::filesystem::path& path, const MlpSpec& expected);

}  // namespace voltgrid
