#pragma once

#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "wsod/rng.hpp"
#include "wsod/tensor.hpp"

namespace wsod {

// ---------------------------------------------------------------------------
// Parameter registry
// ---------------------------------------------------------------------------

// Name -> (parameter, gradient) pointers. Layers own their tensors and
// register them here so the optimizer and the checkpoint writer can walk the
// whole model by name. Single-writer: the training loop is the only mutator.
class ParamSet {
 public:
  void add(const std::string& name, Tensor* param, Tensor* grad);
  void zero_grads();
  const std::map<std::string, std::pair<Tensor*, Tensor*>>& entries() const { return entries_; }
  Tensor* find(const std::string& name);

 private:
  std::map<std::string, std::pair<Tensor*, Tensor*>> entries_;
};

// ---------------------------------------------------------------------------
// Stateless operations
// ---------------------------------------------------------------------------

// input [H x W x Cin], kernels [k x k x Cin x Cout] -> [H' x W' x Cout],
// H' = floor((H + 2*padding - k) / stride) + 1. No bias.
Tensor conv2d_forward(const Tensor& input, const Tensor& kernels, int stride, int padding);

struct Conv2dGrads {
  Tensor input;
  Tensor kernels;
};
Conv2dGrads conv2d_backward(const Tensor& input, const Tensor& kernels, int stride, int padding,
                            const Tensor& grad_output);

// Max-subtracted softmax; shift-invariant and overflow-safe.
std::vector<double> softmax(std::span<const double> logits);
// In-place row softmax of a [rows x cols] matrix.
void softmax_rows(Tensor& m);
// d(loss)/d(logits) given y = softmax(logits) and d(loss)/dy, one row.
void softmax_backward_row(std::span<const double> y, std::span<const double> grad_y,
                          std::span<double> grad_logits);

// Per-channel standardization where the channel is the last dimension and the
// statistics run over all leading dimensions. gamma/beta are [C].
Tensor batchnorm_forward(const Tensor& input, const Tensor& gamma, const Tensor& beta, double eps);

// ---------------------------------------------------------------------------
// LSTM
// ---------------------------------------------------------------------------

struct LstmState {
  std::vector<double> hidden;
  std::vector<double> cell;
};

// Gate parameter bundle. Each weight is [hidden x (input + hidden)] acting on
// concat(x_t, h_prev); each bias is [hidden].
struct LstmWeights {
  Tensor w_forget, w_input, w_output, w_cand;
  Tensor b_forget, b_input, b_output, b_cand;

  std::size_t hidden_dim() const { return b_forget.size(); }
  std::size_t input_dim() const { return w_forget.dim(1) - hidden_dim(); }
};

struct LstmStepResult {
  std::vector<double> output;  // equals next.hidden
  LstmState next;
};

// f,i,o = sigmoid(W.[x;h] + b); g = tanh(Wc.[x;h] + bc);
// c' = f*c + i*g; h' = o*tanh(c').
LstmStepResult lstm_step(std::span<const double> x, const LstmState& prev, const LstmWeights& w);

// Sequence LSTM with cached activations for backpropagation through time.
class LstmLayer {
 public:
  LstmLayer() = default;
  // zero_recurrent_init starts the cell input-driven: the recurrent block of
  // every gate is zeroed so state dynamics come only from the data until
  // training grows them back.
  LstmLayer(std::size_t input_dim, std::size_t hidden_dim, Rng& rng,
            bool zero_recurrent_init = false);

  // Returns hidden states h_1..h_T; caches everything backward() needs.
  std::vector<std::vector<double>> forward(const std::vector<std::vector<double>>& seq);
  // grad_hidden[t] = dL/dh_t. Accumulates weight grads, returns dL/dx_t.
  std::vector<std::vector<double>> backward(const std::vector<std::vector<double>>& grad_hidden);

  void register_params(ParamSet& ps, const std::string& prefix);
  LstmWeights& weights() { return w_; }

 private:
  struct StepCache {
    std::vector<double> z;  // concat(x, h_prev)
    std::vector<double> f, i, o, g;
    std::vector<double> cell, cell_prev, tanh_cell;
  };
  LstmWeights w_, gw_;
  std::vector<StepCache> cache_;
  std::size_t in_dim_ = 0, hid_dim_ = 0;
};

// ---------------------------------------------------------------------------
// Dense / conv / batch-norm layers (parameters + cached forward state)
// ---------------------------------------------------------------------------

// y = W x + b on row vectors; forward_batch treats input as [N x in].
class Linear {
 public:
  Linear() = default;
  Linear(std::size_t in_dim, std::size_t out_dim, Rng& rng);

  Tensor forward(const Tensor& input);            // [N x in] -> [N x out]
  Tensor backward(const Tensor& grad_output);     // -> dL/dinput

  void register_params(ParamSet& ps, const std::string& prefix);
  Tensor& weight() { return w_; }
  Tensor& bias() { return b_; }

 private:
  Tensor w_, b_, gw_, gb_;
  Tensor last_input_;
};

// conv + per-channel bias + optional ReLU.
class ConvLayer {
 public:
  ConvLayer() = default;
  ConvLayer(std::size_t k, std::size_t c_in, std::size_t c_out, int stride, int padding,
            bool relu, Rng& rng);

  Tensor forward(const Tensor& input);
  Tensor backward(const Tensor& grad_output);

  void register_params(ParamSet& ps, const std::string& prefix);
  int stride() const { return stride_; }

 private:
  Tensor kernels_, bias_, gk_, gb_;
  int stride_ = 1, padding_ = 0;
  bool relu_ = false;
  Tensor last_input_, last_pre_act_;
};

// Trainable batch-norm over the last (channel) dimension. Starts disabled and
// passes data through unchanged until enable() is called, so it can be
// inserted mid-training; running statistics serve inference mode.
class BatchNorm {
 public:
  BatchNorm() = default;
  explicit BatchNorm(std::size_t channels, double eps = 1e-8, double momentum = 0.9);

  Tensor forward(const Tensor& input, bool training);
  Tensor backward(const Tensor& grad_output);

  // The flag lives in a checkpointed tensor so a resumed run keeps the layer
  // active.
  void enable() { enabled_flag_[0] = 1.0; }
  bool enabled() const { return !enabled_flag_.empty() && enabled_flag_[0] != 0.0; }
  void register_params(ParamSet& ps, const std::string& prefix);

 private:
  Tensor gamma_, beta_, ggamma_, gbeta_;
  Tensor running_mean_, running_var_, enabled_flag_;
  double eps_ = 1e-8, momentum_ = 0.9;
  // backward caches
  Tensor last_xhat_;
  std::vector<double> last_mean_, last_var_;
  std::size_t last_rows_ = 0;
  bool last_identity_ = true;
};

// ---------------------------------------------------------------------------
// Optimizer
// ---------------------------------------------------------------------------

struct OptimizerConfig {
  static constexpr long kNever = -1;

  double learning_rate = 1e-3;
  // (step, new_rate), steps strictly increasing. The new rate applies to all
  // steps >= the scheduled step.
  std::vector<std::pair<long, double>> schedule;
  long batch_norm_enabled_from_step = kNever;

  double learning_rate_at(long step) const;
  void validate() const;
};

// params -= lr(step) * grads
void sgd_update(Tensor& params, const Tensor& grads, long step, const OptimizerConfig& config);

// ---------------------------------------------------------------------------
// Gradient verification
// ---------------------------------------------------------------------------

// Max over checked coordinates of |analytic - central difference| /
// max(1e-8, |analytic| + |central|). With max_coords > 0 a deterministic
// sample of coordinates is checked instead of all of them.
double finite_difference_check(const std::function<double(const Tensor&)>& loss_fn,
                               const Tensor& params, const Tensor& analytic_grads, double h,
                               std::size_t max_coords = 0, std::uint64_t seed = 12345);

double sigmoid(double x);

}  // namespace wsod
