#include "voltgrid/nn.hpp"

#include <cmath>
#include <sstream>

#include "binary_io.hpp"
#include "voltgrid/error.hpp"

namespace voltgrid {

namespace {

constexpr std::string_view kParamsMagic = "VGNN";
constexpr std::string_view kAdamMagic = "VGAD";
constexpr std::uint32_t kFormatVersion = 1;

// (fan_out, fan_in) of every layer in storage order.
std::vector<std::pair<std::size_t, std::size_t>> layer_shapes(const MlpSpec& spec) {
  std::vector<std::pair<std::size_t, std::size_t>> shapes;
  std::size_t in = spec.input_dim;
  for (std::size_t width : spec.hidden) {
    shapes.emplace_back(width, in);
    in = width;
  }
  shapes.emplace_back(spec.n_actions, in);
  if (spec.dueling) shapes.emplace_back(1, in);
  return shapes;
}

Eigen::MatrixXd affine(const Eigen::MatrixXd& x, const Eigen::MatrixXd& w,
                       const Eigen::VectorXd& b) {
  Eigen::MatrixXd z = x * w.transpose();
  z.rowwise() += b.transpose();
  return z;
}

void put_spec(detail::BinaryWriter& out, const MlpSpec& spec) {
  out.put<std::uint64_t>(spec.input_dim);
  out.put<std::uint64_t>(spec.hidden.size());
  for (std::size_t h : spec.hidden) out.put<std::uint64_t>(h);
  out.put<std::uint64_t>(spec.n_actions);
  out.put<std::uint8_t>(spec.dueling ? 1 : 0);
}

MlpSpec get_spec(detail::BinaryReader& in) {
  MlpSpec spec;
  spec.input_dim = in.get<std::uint64_t>();
  const auto n_hidden = in.get<std::uint64_t>();
  if (n_hidden > 1024) in.corrupt("implausible layer count");
  spec.hidden.resize(n_hidden);
  for (auto& h : spec.hidden) h = in.get<std::uint64_t>();
  spec.n_actions = in.get<std::uint64_t>();
  const auto dueling = in.get<std::uint8_t>();
  if (dueling > 1) in.corrupt("bad dueling flag");
  spec.dueling = dueling == 1;
  return spec;
}

void expect_spec(const MlpSpec& stored, const std::optional<MlpSpec>& expected,
                 const std::filesystem::path& path) {
  if (expected && stored != *expected) {
    throw SpecMismatchError(path.string() + ": file holds " + describe(stored) +
                            ", expected " + describe(*expected));
  }
}

void put_tensors(detail::BinaryWriter& out, const Parameters& p) {
  for (std::size_t l = 0; l < p.weights.size(); ++l) {
    out.put_matrix(p.weights[l]);
    out.put_vector(p.biases[l]);
  }
}

Parameters get_tensors(detail::BinaryReader& in, const MlpSpec& spec) {
  Parameters p;
  p.spec = spec;
  for (const auto& [rows, cols] : layer_shapes(spec)) {
    Eigen::MatrixXd w = in.get_matrix();
    Eigen::VectorXd b = in.get_vector();
    if (static_cast<std::size_t>(w.rows()) != rows ||
        static_cast<std::size_t>(w.cols()) != cols ||
        static_cast<std::size_t>(b.size()) != rows) {
      in.corrupt("tensor shape disagrees with the stored spec");
    }
    p.weights.push_back(std::move(w));
    p.biases.push_back(std::move(b));
  }
  return p;
}

}  // namespace

void check(const MlpSpec& spec) {
  bool ok = spec.input_dim >= 1 && spec.n_actions >= 1;
  for (std::size_t h : spec.hidden) ok = ok && h >= 1;
  if (!ok) throw SpecMismatchError("every network dimension must be at least 1: " + describe(spec));
}

std::string describe(const MlpSpec& spec) {
  std::ostringstream os;
  os << spec.input_dim;
  for (std::size_t h : spec.hidden) os << '-' << h;
  os << '-' << spec.n_actions << (spec.dueling ? " dueling" : " plain");
  return os.str();
}

std::size_t Parameters::size() const {
  std::size_t n = 0;
  for (std::size_t l = 0; l < weights.size(); ++l) {
    n += static_cast<std::size_t>(weights[l].size() + biases[l].size());
  }
  return n;
}

bool Parameters::all_finite() const {
  for (std::size_t l = 0; l < weights.size(); ++l) {
    if (!weights[l].allFinite() || !biases[l].allFinite()) return false;
  }
  return true;
}

bool Parameters::operator==(const Parameters& other) const {
  if (spec != other.spec || weights.size() != other.weights.size()) return false;
  for (std::size_t l = 0; l < weights.size(); ++l) {
    if (weights[l].rows() != other.weights[l].rows() ||
        weights[l].cols() != other.weights[l].cols() ||
        biases[l].size() != other.biases[l].size()) {
      return false;
    }
    if (std::memcmp(weights[l].data(), other.weights[l].data(),
                    sizeof(double) * weights[l].size()) != 0 ||
        std::memcmp(biases[l].data(), other.biases[l].data(),
                    sizeof(double) * biases[l].size()) != 0) {
      return false;
    }
  }
  return true;
}

Parameters init_params(const MlpSpec& spec, Rng& rng) {
  check(spec);
  Parameters p;
  p.spec = spec;
  for (const auto& [rows, cols] : layer_shapes(spec)) {
    const double r = std::sqrt(1.0 / static_cast<double>(cols));
    Eigen::MatrixXd w(rows, cols);
    Eigen::VectorXd b(rows);
    for (Eigen::Index j = 0; j < w.cols(); ++j) {
      for (Eigen::Index i = 0; i < w.rows(); ++i) w(i, j) = rng.uniform(-r, r);
    }
    for (Eigen::Index i = 0; i < b.size(); ++i) b(i) = rng.uniform(-r, r);
    p.weights.push_back(std::move(w));
    p.biases.push_back(std::move(b));
  }
  return p;
}

Parameters zeros_like(const Parameters& params) {
  Parameters z;
  z.spec = params.spec;
  for (std::size_t l = 0; l < params.weights.size(); ++l) {
    z.weights.push_back(Eigen::MatrixXd::Zero(params.weights[l].rows(), params.weights[l].cols()));
    z.biases.push_back(Eigen::VectorXd::Zero(params.biases[l].size()));
  }
  return z;
}

Eigen::MatrixXd forward(const Parameters& p, const Eigen::MatrixXd& obs) {
  if (static_cast<std::size_t>(obs.cols()) != p.spec.input_dim) {
    throw SpecMismatchError("observation width " + std::to_string(obs.cols()) +
                            " does not match network input " +
                            std::to_string(p.spec.input_dim));
  }
  const std::size_t H = p.trunk_layers();
  Eigen::MatrixXd h = obs;
  for (std::size_t l = 0; l < H; ++l) h = affine(h, p.weights[l], p.biases[l]).cwiseMax(0.0);
  Eigen::MatrixXd q = affine(h, p.weights[H], p.biases[H]);
  if (p.spec.dueling) {
    const Eigen::VectorXd v = affine(h, p.weights[H + 1], p.biases[H + 1]).col(0);
    const Eigen::VectorXd mean_a = q.rowwise().mean();
    q.colwise() += v - mean_a;
  }
  return q;
}

Gradients backward(const Parameters& p, const Eigen::MatrixXd& obs,
                   const Eigen::VectorXd& weights, const std::vector<std::size_t>& actions,
                   const Eigen::VectorXd& targets, double huber_delta) {
  const Eigen::Index B = obs.rows();
  if (static_cast<std::size_t>(obs.cols()) != p.spec.input_dim || weights.size() != B ||
      targets.size() != B || actions.size() != static_cast<std::size_t>(B) || B == 0) {
    throw SpecMismatchError("backward: inconsistent batch shapes");
  }
  if (!obs.allFinite() || !weights.allFinite() || !targets.allFinite()) {
    throw Error("backward: non-finite input");
  }
  for (std::size_t a : actions) {
    if (a >= p.spec.n_actions) throw SpecMismatchError("backward: action index out of range");
  }

  const std::size_t H = p.trunk_layers();
  std::vector<Eigen::MatrixXd> acts{obs};
  for (std::size_t l = 0; l < H; ++l) {
    acts.push_back(affine(acts.back(), p.weights[l], p.biases[l]).cwiseMax(0.0));
  }
  const Eigen::MatrixXd& top = acts.back();
  Eigen::MatrixXd q = affine(top, p.weights[H], p.biases[H]);
  if (p.spec.dueling) {
    const Eigen::VectorXd v = affine(top, p.weights[H + 1], p.biases[H + 1]).col(0);
    const Eigen::VectorXd mean_a = q.rowwise().mean();
    q.colwise() += v - mean_a;
  }

  Gradients out;
  out.grads = zeros_like(p);
  out.td_error.resize(B);
  // dL/dQ has one entry per row, at the taken action.
  Eigen::VectorXd slope(B);
  const double inv_b = 1.0 / static_cast<double>(B);
  for (Eigen::Index i = 0; i < B; ++i) {
    const double e = q(i, static_cast<Eigen::Index>(actions[i])) - targets(i);
    out.td_error(i) = e;
    const double ae = std::abs(e);
    const double loss = ae <= huber_delta ? 0.5 * e * e : huber_delta * (ae - 0.5 * huber_delta);
    out.loss += weights(i) * loss * inv_b;
    slope(i) = weights(i) * (ae <= huber_delta ? e : huber_delta * (e > 0 ? 1.0 : -1.0)) * inv_b;
  }

  // The head gradients are assembled row by row instead of through dense
  // batch x n_actions products.
  Eigen::MatrixXd& gw = out.grads.weights[H];
  Eigen::VectorXd& gb = out.grads.biases[H];
  Eigen::MatrixXd dh(B, top.cols());
  for (Eigen::Index i = 0; i < B; ++i) {
    const auto a = static_cast<Eigen::Index>(actions[i]);
    gw.row(a) += slope(i) * top.row(i);
    gb(a) += slope(i);
    dh.row(i) = slope(i) * p.weights[H].row(a);
  }
  if (p.spec.dueling) {
    // Q = V + A - mean(A): the advantage gradient loses its row mean and the
    // value head sees the full slope.
    const double n = static_cast<double>(p.spec.n_actions);
    const Eigen::RowVectorXd st = slope.transpose() * top;
    gw.rowwise() -= st / n;
    gb.array() -= slope.sum() / n;
    out.grads.weights[H + 1] = st;
    out.grads.biases[H + 1](0) = slope.sum();
    const Eigen::RowVectorXd shift = p.weights[H + 1].row(0) - p.weights[H].colwise().mean();
    dh += slope * shift;
  }
  for (std::size_t l = H; l-- > 0;) {
    const Eigen::MatrixXd dz = (acts[l + 1].array() > 0.0).cast<double>() * dh.array();
    out.grads.weights[l] = dz.transpose() * acts[l];
    out.grads.biases[l] = dz.colwise().sum().transpose();
    if (l > 0) dh = dz * p.weights[l];
  }
  return out;
}

double clip_grad_norm(Parameters& g, double max_norm) {
  double sq = 0.0;
  for (std::size_t l = 0; l < g.weights.size(); ++l) {
    sq += g.weights[l].squaredNorm() + g.biases[l].squaredNorm();
  }
  const double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0.0) {
    const double s = max_norm / norm;
    for (std::size_t l = 0; l < g.weights.size(); ++l) {
      g.weights[l] *= s;
      g.biases[l] *= s;
    }
  }
  return norm;
}

AdamState make_adam(const Parameters& params) {
  AdamState s;
  s.m = zeros_like(params);
  s.v = zeros_like(params);
  return s;
}

void adam_step(Parameters& p, const Parameters& g, AdamState& s, double lr) {
  ++s.step;
  const double c1 = 1.0 - std::pow(s.beta1, static_cast<double>(s.step));
  const double c2 = 1.0 - std::pow(s.beta2, static_cast<double>(s.step));
  auto update = [&](auto& param, const auto& grad, auto& m, auto& v) {
    m = s.beta1 * m + (1.0 - s.beta1) * grad;
    v = s.beta2 * v + (1.0 - s.beta2) * grad.cwiseProduct(grad);
    param.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + s.epsilon);
  };
  for (std::size_t l = 0; l < p.weights.size(); ++l) {
    update(p.weights[l], g.weights[l], s.m.weights[l], s.v.weights[l]);
    update(p.biases[l], g.biases[l], s.m.biases[l], s.v.biases[l]);
  }
}

void save_params(const Parameters& params, const std::filesystem::path& path) {
  detail::BinaryWriter out(kParamsMagic, kFormatVersion);
  put_spec(out, params.spec);
  put_tensors(out, params);
  out.write(path);
}

Parameters load_params(const std::filesystem::path& path, const std::optional<MlpSpec>& expected) {
  detail::BinaryReader in(path, kParamsMagic, kFormatVersion);
  const MlpSpec spec = get_spec(in);
  expect_spec(spec, expected, path);
  Parameters p = get_tensors(in, spec);
  in.expect_end();
  return p;
}

void save_adam(const AdamState& s, const std::filesystem::path& path) {
  detail::BinaryWriter out(kAdamMagic, kFormatVersion);
  put_spec(out, s.m.spec);
  out.put<std::int64_t>(s.step);
  out.put<double>(s.beta1);
  out.put<double>(s.beta2);
  out.put<double>(s.epsilon);
  put_tensors(out, s.m);
  put_tensors(out, s.v);
  out.write(path);
}

AdamState load_adam(const std::filesystem::path& path, const MlpSpec& expected) {
  detail::BinaryReader in(path, kAdamMagic, kFormatVersion);
  const MlpSpec spec = get_spec(in);
  expect_spec(spec, expected, path);
  AdamState s;
  s.step = in.get<std::int64_t>();
  s.beta1 = in.get<double>();
  s.beta2 = in.get<double>();
  s.epsilon = in.get<double>();
  s.m = get_tensors(in, spec);
  s.v = get_tensors(in, spec);
  in.expect_end();
  return s;
}

}  // namespace voltgrid
