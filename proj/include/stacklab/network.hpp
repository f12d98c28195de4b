#pragma once

// Deep residual linear networks x -> W_t x with
//   W_t = (I + w_t)(I + w_{t-1}) ... (I + w_1),
// grown one layer per stage.

#include <cstddef>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "stacklab/matrix.hpp"
#include "stacklab/problem.hpp"
#include "stacklab/updates.hpp"

namespace stacklab {

class Rng;

struct ZeroInit {};
// Entries i.i.d. N(0, scale^2 / d).
struct RandomInit {
  double scale = 1.0;
};
// w^0_{t+1} = beta * w_t.
struct StackingInit {
  double beta = 0.0;
};
// w^0_{t+1} = beta * w_t (I + w_t)^{-1}, which makes the lookahead
// (I + w^0_{t+1}) W_t equal to W_t + beta (W_t - W_{t-1}).
struct NesterovInit {
  double beta = 0.0;
};

using InitScheme = std::variant<ZeroInit, RandomInit, StackingInit, NesterovInit>;

std::string scheme_name(const InitScheme& scheme);
// Stacking and Nesterov initializations copy the previous layer.
bool needs_previous_layer(const InitScheme& scheme);

class NetworkState {
 public:
  explicit NetworkState(std::size_t dim);

  std::size_t dim() const { return product_.dim(); }
  std::size_t depth() const { return layers_.size(); }
  const std::vector<Matrix>& layers() const { return layers_; }
  const Matrix& last_layer() const;

  // Cached W_t, and W_{t-1} (equal to I before the second stage).
  const Matrix& product() const { return product_; }
  const Matrix& previous_product() const { return previous_; }

  // Freshly multiplied layer product, for cache coherence checks.
  Matrix recompute_product() const;

  // Appends a layer whose end-to-end product is already known.
  void push_layer(Matrix layer, Matrix new_product);

  // Replaces every layer and refreshes the product cache. The previous product
  // is kept as the product before the call.
  void replace_layers(std::vector<Matrix> layers);

  static NetworkState from_layers(std::size_t dim, std::vector<Matrix> layers);

 private:
  std::vector<Matrix> layers_;
  Matrix product_;
  Matrix previous_;
};

Matrix init_new_layer(const NetworkState& s, const InitScheme& scheme, Rng& rng);

// Appends a layer initialized by `scheme` and performs the regularized
// linearized solve at the product level:
//   W^0 = (I + w^0) W_t,   W_{t+1} = W^0 - step * grad(W^0),
// then back-solves w_{t+1} = W_{t+1} W_t^{-1} - I. The cached product is set
// to W_{t+1} as computed, so the Zero scheme reproduces gd_step bit for bit.
NetworkState stage_last_layer(const NetworkState& s, const InitScheme& scheme,
                              const ProblemModel& m, const UpdateParams& p, Rng& rng);

// g_i = P_{>i}^T G P_{<i}^T for every layer, where P_{>i} and P_{<i} are the
// products of the factors above and below layer i.
std::vector<Matrix> per_layer_gradients(const NetworkState& s, const Matrix& grad_out);

// Cycles through a dataset in minibatches, reshuffling each epoch.
class BatchStream {
 public:
  BatchStream(const Dataset& data, std::size_t batch_size, Rng& rng);

  std::span<const std::size_t> next();
  const Dataset& data() const { return *data_; }

 private:
  void reshuffle();

  const Dataset* data_;
  std::size_t batch_size_;
  Rng* rng_;
  std::vector<std::size_t> order_;
  std::size_t cursor_ = 0;
};

// Source of the end-to-end gradient for all-layers training: either the
// expected-loss gradient of a model or minibatch empirical gradients.
using GradientSource = std::variant<const ProblemModel*, BatchStream*>;

// Appends a layer initialized by `scheme` and runs `inner_steps` steps of
// gradient descent on every layer with the given learning rate.
NetworkState stage_all_layers(const NetworkState& s, const InitScheme& scheme,
                              std::size_t inner_steps, double learning_rate,
                              GradientSource gradients, Rng& rng);

}  // namespace stacklab
