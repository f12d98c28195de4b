#include "stacklab/network.hpp"

#include <cmath>
#include <numeric>
#include <utility>

#include "stacklab/errors.hpp"
#include "stacklab/rng.hpp"

namespace stacklab {

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};

Matrix residual_factor(const Matrix& layer) { return Matrix::identity(layer.dim()) + layer; }

}  // namespace

std::string scheme_name(const InitScheme& scheme) {
  return std::visit(overloaded{[](const ZeroInit&) { return std::string("zero"); },
                               [](const RandomInit&) { return std::string("random"); },
                               [](const StackingInit&) { return std::string("stacking"); },
                               [](const NesterovInit&) { return std::string("nesterov_init"); }},
                    scheme);
}

bool needs_previous_layer(const InitScheme& scheme) {
  return std::holds_alternative<StackingInit>(scheme) ||
         std::holds_alternative<NesterovInit>(scheme);
}

NetworkState::NetworkState(std::size_t dim)
    : product_(Matrix::identity(dim)), previous_(Matrix::identity(dim)) {
  if (dim == 0) throw UsageError("NetworkState: dim must be positive");
}

const Matrix& NetworkState::last_layer() const {
  if (layers_.empty()) throw UsageError("NetworkState: network has no layers");
  return layers_.back();
}

Matrix NetworkState::recompute_product() const {
  Matrix p = Matrix::identity(dim());
  for (const Matrix& w : layers_) p = matmul(residual_factor(w), p);
  return p;
}

void NetworkState::push_layer(Matrix layer, Matrix new_product) {
  if (layer.dim() != dim() || new_product.dim() != dim()) {
    throw UsageError("NetworkState::push_layer: dimension mismatch");
  }
  layers_.push_back(std::move(layer));
  previous_ = std::exchange(product_, std::move(new_product));
}

void NetworkState::replace_layers(std::vector<Matrix> layers) {
  for (const Matrix& w : layers)
    if (w.dim() != dim()) throw UsageError("NetworkState::replace_layers: dimension mismatch");
  layers_ = std::move(layers);
  previous_ = std::exchange(product_, recompute_product());
}

NetworkState NetworkState::from_layers(std::size_t dim, std::vector<Matrix> layers) {
  NetworkState s(dim);
  for (Matrix& w : layers) {
    if (w.dim() != dim) throw UsageError("NetworkState::from_layers: dimension mismatch");
    Matrix next = matmul(residual_factor(w), s.product_);
    s.push_layer(std::move(w), std::move(next));
  }
  return s;
}

Matrix init_new_layer(const NetworkState& s, const InitScheme& scheme, Rng& rng) {
  if (needs_previous_layer(scheme) && s.depth() == 0) {
    throw UsageError("init_new_layer: " + scheme_name(scheme) +
                     " initialization needs an existing layer");
  }
  const std::size_t d = s.dim();
  return std::visit(
      overloaded{
          [&](const ZeroInit&) { return Matrix(d); },
          [&](const RandomInit& r) {
            Matrix w = gaussian_matrix(d, rng);
            w *= r.scale / std::sqrt(static_cast<double>(d));
            return w;
          },
          [&](const StackingInit& st) { return s.last_layer() * st.beta; },
          [&](const NesterovInit& n) {
            const Matrix& w = s.last_layer();
            return matmul(w, inverse(residual_factor(w))) * n.beta;
          }},
      scheme);
}

NetworkState stage_last_layer(const NetworkState& s, const InitScheme& scheme,
                              const ProblemModel& m, const UpdateParams& p, Rng& rng) {
  const Matrix init = init_new_layer(s, scheme, rng);
  const Matrix lookahead = matmul(residual_factor(init), s.product());
  Matrix next = gd_step(lookahead, m, p);
  Matrix layer = matmul(next, inverse(s.product())) - Matrix::identity(s.dim());
  NetworkState out = s;
  out.push_layer(std::move(layer), std::move(next));
  return out;
}

std::vector<Matrix> per_layer_gradients(const NetworkState& s, const Matrix& grad_out) {
  const std::size_t depth = s.depth();
  const std::size_t d = s.dim();
  if (grad_out.dim() != d) throw UsageError("per_layer_gradients: dimension mismatch");
  const auto& layers = s.layers();

  // below[i] = (I + w_{i-1}) ... (I + w_1); above[i] = (I + w_T) ... (I + w_{i+1}).
  std::vector<Matrix> below(depth), above(depth);
  Matrix acc = Matrix::identity(d);
  for (std::size_t i = 0; i < depth; ++i) {
    below[i] = acc;
    acc = matmul(residual_factor(layers[i]), acc);
  }
  acc = Matrix::identity(d);
  for (std::size_t i = depth; i-- > 0;) {
    above[i] = acc;
    acc = matmul(acc, residual_factor(layers[i]));
  }

  std::vector<Matrix> grads;
  grads.reserve(depth);
  for (std::size_t i = 0; i < depth; ++i) {
    grads.push_back(matmul_nt(matmul_tn(above[i], grad_out), below[i]));
  }
  return grads;
}

BatchStream::BatchStream(const Dataset& data, std::size_t batch_size, Rng& rng)
    : data_(&data), batch_size_(batch_size), rng_(&rng), order_(data.n) {
  if (data.n == 0) throw UsageError("BatchStream: empty dataset");
  if (batch_size == 0) throw UsageError("BatchStream: batch size must be positive");
  std::iota(order_.begin(), order_.end(), std::size_t{0});
  reshuffle();
}

void BatchStream::reshuffle() {
  for (std::size_t i = order_.size(); i > 1; --i) {
    std::swap(order_[i - 1], order_[rng_->below(i)]);
  }
  cursor_ = 0;
}

std::span<const std::size_t> BatchStream::next() {
  if (cursor_ >= order_.size()) reshuffle();
  const std::size_t count = std::min(batch_size_, order_.size() - cursor_);
  std::span<const std::size_t> batch(order_.data() + cursor_, count);
  cursor_ += count;
  return batch;
}

NetworkState stage_all_layers(const NetworkState& s, const InitScheme& scheme,
                              std::size_t inner_steps, double learning_rate,
                              GradientSource gradients, Rng& rng) {
  if (inner_steps == 0) throw UsageError("stage_all_layers: inner_steps must be >= 1");
  if (!(learning_rate > 0.0)) throw UsageError("stage_all_layers: learning rate must be positive");

  std::vector<Matrix> layers = s.layers();
  {
    Matrix init = init_new_layer(s, scheme, rng);
    layers.push_back(std::move(init));
  }
  NetworkState current = NetworkState::from_layers(s.dim(), layers);

  for (std::size_t step = 0; step < inner_steps; ++step) {
    const Matrix grad_out = std::visit(
        overloaded{[&](const ProblemModel* m) { return loss_gradient(current.product(), *m); },
                   [&](BatchStream* stream) {
                     const auto rows = stream->next();
                     return empirical_gradient(current.product(), stream->data(), rows);
                   }},
        gradients);
    const auto grads = per_layer_gradients(current, grad_out);
    for (std::size_t i = 0; i < layers.size(); ++i) layers[i] -= grads[i] * learning_rate;
    current.replace_layers(layers);
  }

  // History tracks stage boundaries: the previous product is W_t before this stage.
  NetworkState result = s;
  result.replace_layers(std::move(layers));
  return result;
}

}  // namespace stacklab
