#include "wsod/nn.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "wsod/common.hpp"

namespace wsod {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// ---------------------------------------------------------------------------
// ParamSet
// ---------------------------------------------------------------------------

void ParamSet::add(const std::string& name, Tensor* param, Tensor* grad) {
  if (entries_.count(name)) throw std::invalid_argument("ParamSet: duplicate name " + name);
  entries_[name] = {param, grad};
}

void ParamSet::zero_grads() {
  for (auto& [name, pg] : entries_) {
    if (pg.second) pg.second->fill(0.0);
  }
}

Tensor* ParamSet::find(const std::string& name) {
  auto it = entries_.find(name);
  return it == entries_.end() ? nullptr : it->second.first;
}

// ---------------------------------------------------------------------------
// Convolution
// ---------------------------------------------------------------------------

namespace {
void check_conv_args(const Tensor& input, const Tensor& kernels, int stride, int padding) {
  if (input.rank() != 3) {
    throw std::invalid_argument("conv2d: input must be H x W x Cin, got " + input.shape_str());
  }
  if (kernels.rank() != 4 || kernels.dim(0) != kernels.dim(1)) {
    throw std::invalid_argument("conv2d: kernels must be k x k x Cin x Cout, got " +
                                kernels.shape_str());
  }
  if (input.dim(2) != kernels.dim(2)) {
    std::ostringstream os;
    os << "conv2d: input channels " << input.shape_str() << " do not match kernel channels "
       << kernels.shape_str();
    throw std::invalid_argument(os.str());
  }
  if (stride < 1) throw std::invalid_argument("conv2d: stride must be positive");
  if (padding < 0) throw std::invalid_argument("conv2d: padding must be nonnegative");
  const long k = static_cast<long>(kernels.dim(0));
  if (k > static_cast<long>(input.dim(0)) + 2 * padding ||
      k > static_cast<long>(input.dim(1)) + 2 * padding) {
    throw std::invalid_argument("conv2d: kernel larger than padded input");
  }
}
}  // namespace

Tensor conv2d_forward(const Tensor& input, const Tensor& kernels, int stride, int padding) {
  check_conv_args(input, kernels, stride, padding);
  const long h = static_cast<long>(input.dim(0)), w = static_cast<long>(input.dim(1));
  const long cin = static_cast<long>(input.dim(2));
  const long k = static_cast<long>(kernels.dim(0)), cout = static_cast<long>(kernels.dim(3));
  const long ho = (h + 2 * padding - k) / stride + 1;
  const long wo = (w + 2 * padding - k) / stride + 1;

  Tensor out({static_cast<std::size_t>(ho), static_cast<std::size_t>(wo),
              static_cast<std::size_t>(cout)});
  for (long oy = 0; oy < ho; ++oy) {
    for (long ox = 0; ox < wo; ++ox) {
      const long y0 = oy * stride - padding;
      const long x0 = ox * stride - padding;
      for (long ky = 0; ky < k; ++ky) {
        const long iy = y0 + ky;
        if (iy < 0 || iy >= h) continue;
        for (long kx = 0; kx < k; ++kx) {
          const long ix = x0 + kx;
          if (ix < 0 || ix >= w) continue;
          const double* in_px = input.data() + (iy * w + ix) * cin;
          const double* kr = kernels.data() + (ky * k + kx) * cin * cout;
          double* out_px = out.data() + (oy * wo + ox) * cout;
          for (long ci = 0; ci < cin; ++ci) {
            const double v = in_px[ci];
            const double* kc = kr + ci * cout;
            for (long co = 0; co < cout; ++co) out_px[co] += v * kc[co];
          }
        }
      }
    }
  }
  return out;
}

Conv2dGrads conv2d_backward(const Tensor& input, const Tensor& kernels, int stride, int padding,
                            const Tensor& grad_output) {
  check_conv_args(input, kernels, stride, padding);
  const long h = static_cast<long>(input.dim(0)), w = static_cast<long>(input.dim(1));
  const long cin = static_cast<long>(input.dim(2));
  const long k = static_cast<long>(kernels.dim(0)), cout = static_cast<long>(kernels.dim(3));
  const long ho = static_cast<long>(grad_output.dim(0)), wo = static_cast<long>(grad_output.dim(1));

  Conv2dGrads g;
  g.input = Tensor::zeros(input.shape());
  g.kernels = Tensor::zeros(kernels.shape());
  for (long oy = 0; oy < ho; ++oy) {
    for (long ox = 0; ox < wo; ++ox) {
      const long y0 = oy * stride - padding;
      const long x0 = ox * stride - padding;
      const double* go_px = grad_output.data() + (oy * wo + ox) * cout;
      for (long ky = 0; ky < k; ++ky) {
        const long iy = y0 + ky;
        if (iy < 0 || iy >= h) continue;
        for (long kx = 0; kx < k; ++kx) {
          const long ix = x0 + kx;
          if (ix < 0 || ix >= w) continue;
          const double* in_px = input.data() + (iy * w + ix) * cin;
          double* gi_px = g.input.data() + (iy * w + ix) * cin;
          const double* kr = kernels.data() + (ky * k + kx) * cin * cout;
          double* gk_r = g.kernels.data() + (ky * k + kx) * cin * cout;
          for (long ci = 0; ci < cin; ++ci) {
            const double* kc = kr + ci * cout;
            double* gk_c = gk_r + ci * cout;
            double acc = 0.0;
            for (long co = 0; co < cout; ++co) {
              acc += kc[co] * go_px[co];
              gk_c[co] += in_px[ci] * go_px[co];
            }
            gi_px[ci] += acc;
          }
        }
      }
    }
  }
  return g;
}

// ---------------------------------------------------------------------------
// Softmax
// ---------------------------------------------------------------------------

std::vector<double> softmax(std::span<const double> logits) {
  if (logits.empty()) throw std::invalid_argument("softmax: empty input");
  double mx = logits[0];
  for (double v : logits) {
    if (!std::isfinite(v)) throw std::invalid_argument("softmax: non-finite logit");
    mx = std::max(mx, v);
  }
  std::vector<double> out(logits.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - mx);
    sum += out[i];
  }
  for (double& v : out) v /= sum;
  return out;
}

void softmax_rows(Tensor& m) {
  if (m.rank() != 2) throw std::invalid_argument("softmax_rows: expected matrix, got " + m.shape_str());
  const std::size_t rows = m.dim(0), cols = m.dim(1);
  for (std::size_t r = 0; r < rows; ++r) {
    auto row = softmax(std::span<const double>(m.data() + r * cols, cols));
    std::copy(row.begin(), row.end(), m.data() + r * cols);
  }
}

void softmax_backward_row(std::span<const double> y, std::span<const double> grad_y,
                          std::span<double> grad_logits) {
  double inner = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) inner += grad_y[i] * y[i];
  for (std::size_t i = 0; i < y.size(); ++i) grad_logits[i] = y[i] * (grad_y[i] - inner);
}

// ---------------------------------------------------------------------------
// Batch norm (stateless op)
// ---------------------------------------------------------------------------

Tensor batchnorm_forward(const Tensor& input, const Tensor& gamma, const Tensor& beta, double eps) {
  if (eps <= 0.0) throw std::invalid_argument("batchnorm: epsilon must be positive");
  if (input.rank() < 1 || input.size() == 0) throw std::invalid_argument("batchnorm: empty input");
  const std::size_t channels = input.dim(input.rank() - 1);
  const std::size_t rows = input.size() / channels;
  if (rows == 0) throw std::invalid_argument("batchnorm: zero-size batch");
  if (gamma.size() != channels || beta.size() != channels) {
    throw std::invalid_argument("batchnorm: gamma/beta must have one entry per channel");
  }
  Tensor out(input.shape());
  for (std::size_t c = 0; c < channels; ++c) {
    double mean = 0.0;
    for (std::size_t r = 0; r < rows; ++r) mean += input[r * channels + c];
    mean /= static_cast<double>(rows);
    double var = 0.0;
    for (std::size_t r = 0; r < rows; ++r) {
      const double d = input[r * channels + c] - mean;
      var += d * d;
    }
    var /= static_cast<double>(rows);
    const double inv = 1.0 / std::sqrt(var + eps);
    for (std::size_t r = 0; r < rows; ++r) {
      out[r * channels + c] = gamma[c] * (input[r * channels + c] - mean) * inv + beta[c];
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// LSTM
// ---------------------------------------------------------------------------

namespace {
void check_lstm_dims(std::span<const double> x, const LstmState& prev, const LstmWeights& w) {
  const std::size_t hid = w.hidden_dim();
  const std::size_t in = w.input_dim();
  if (prev.hidden.size() != hid || prev.cell.size() != hid) {
    throw std::invalid_argument("lstm_step: state size does not match weights");
  }
  if (x.size() != in) {
    std::ostringstream os;
    os << "lstm_step: input size " << x.size() << " does not match weight input dim " << in;
    throw std::invalid_argument(os.str());
  }
  for (const Tensor* t : {&w.w_forget, &w.w_input, &w.w_output, &w.w_cand}) {
    if (t->rank() != 2 || t->dim(0) != hid || t->dim(1) != in + hid) {
      throw std::invalid_argument("lstm_step: inconsistent gate weight shape " + t->shape_str());
    }
  }
}

// out = W z + b, W is [hid x zdim]
void affine(const Tensor& w, const Tensor& b, const std::vector<double>& z,
            std::vector<double>& out) {
  const std::size_t hid = w.dim(0), zd = w.dim(1);
  out.resize(hid);
  for (std::size_t i = 0; i < hid; ++i) {
    const double* row = w.data() + i * zd;
    double acc = b[i];
    for (std::size_t j = 0; j < zd; ++j) acc += row[j] * z[j];
    out[i] = acc;
  }
}
}  // namespace

LstmStepResult lstm_step(std::span<const double> x, const LstmState& prev, const LstmWeights& w) {
  check_lstm_dims(x, prev, w);
  const std::size_t hid = w.hidden_dim();
  std::vector<double> z(x.begin(), x.end());
  z.insert(z.end(), prev.hidden.begin(), prev.hidden.end());

  std::vector<double> f, i, o, g;
  affine(w.w_forget, w.b_forget, z, f);
  affine(w.w_input, w.b_input, z, i);
  affine(w.w_output, w.b_output, z, o);
  affine(w.w_cand, w.b_cand, z, g);

  LstmStepResult res;
  res.next.cell.resize(hid);
  res.next.hidden.resize(hid);
  for (std::size_t j = 0; j < hid; ++j) {
    const double fj = sigmoid(f[j]), ij = sigmoid(i[j]), oj = sigmoid(o[j]);
    const double gj = std::tanh(g[j]);
    res.next.cell[j] = fj * prev.cell[j] + ij * gj;
    res.next.hidden[j] = oj * std::tanh(res.next.cell[j]);
  }
  res.output = res.next.hidden;
  return res;
}

namespace {
Tensor init_weight(std::size_t rows, std::size_t cols, Rng& rng) {
  Tensor t({rows, cols});
  const double bound = 1.0 / std::sqrt(static_cast<double>(cols));
  rng.fill_uniform(t, -bound, bound);
  return t;
}
}  // namespace

LstmLayer::LstmLayer(std::size_t input_dim, std::size_t hidden_dim, Rng& rng,
                     bool zero_recurrent_init)
    : in_dim_(input_dim), hid_dim_(hidden_dim) {
  const std::size_t zd = input_dim + hidden_dim;
  w_.w_forget = init_weight(hidden_dim, zd, rng);
  w_.w_input = init_weight(hidden_dim, zd, rng);
  w_.w_output = init_weight(hidden_dim, zd, rng);
  w_.w_cand = init_weight(hidden_dim, zd, rng);
  if (zero_recurrent_init) {
    for (Tensor* w : {&w_.w_forget, &w_.w_input, &w_.w_output, &w_.w_cand}) {
      for (std::size_t j = 0; j < hidden_dim; ++j) {
        for (std::size_t q = input_dim; q < zd; ++q) w->at(j, q) = 0.0;
      }
    }
  }
  w_.b_forget = Tensor::full({hidden_dim}, 1.0);  // open forget gates at init
  w_.b_input = Tensor::zeros({hidden_dim});
  w_.b_output = Tensor::zeros({hidden_dim});
  w_.b_cand = Tensor::zeros({hidden_dim});
  gw_.w_forget = Tensor::zeros({hidden_dim, zd});
  gw_.w_input = Tensor::zeros({hidden_dim, zd});
  gw_.w_output = Tensor::zeros({hidden_dim, zd});
  gw_.w_cand = Tensor::zeros({hidden_dim, zd});
  gw_.b_forget = Tensor::zeros({hidden_dim});
  gw_.b_input = Tensor::zeros({hidden_dim});
  gw_.b_output = Tensor::zeros({hidden_dim});
  gw_.b_cand = Tensor::zeros({hidden_dim});
}

std::vector<std::vector<double>> LstmLayer::forward(const std::vector<std::vector<double>>& seq) {
  cache_.clear();
  cache_.reserve(seq.size());
  std::vector<std::vector<double>> hs;
  hs.reserve(seq.size());

  LstmState state{std::vector<double>(hid_dim_, 0.0), std::vector<double>(hid_dim_, 0.0)};
  for (const auto& x : seq) {
    if (x.size() != in_dim_) throw std::invalid_argument("LstmLayer: frame size mismatch");
    StepCache sc;
    sc.z.assign(x.begin(), x.end());
    sc.z.insert(sc.z.end(), state.hidden.begin(), state.hidden.end());
    sc.cell_prev = state.cell;

    affine(w_.w_forget, w_.b_forget, sc.z, sc.f);
    affine(w_.w_input, w_.b_input, sc.z, sc.i);
    affine(w_.w_output, w_.b_output, sc.z, sc.o);
    affine(w_.w_cand, w_.b_cand, sc.z, sc.g);
    sc.cell.resize(hid_dim_);
    sc.tanh_cell.resize(hid_dim_);
    for (std::size_t j = 0; j < hid_dim_; ++j) {
      sc.f[j] = sigmoid(sc.f[j]);
      sc.i[j] = sigmoid(sc.i[j]);
      sc.o[j] = sigmoid(sc.o[j]);
      sc.g[j] = std::tanh(sc.g[j]);
      sc.cell[j] = sc.f[j] * state.cell[j] + sc.i[j] * sc.g[j];
      sc.tanh_cell[j] = std::tanh(sc.cell[j]);
    }
    state.cell = sc.cell;
    state.hidden.resize(hid_dim_);
    for (std::size_t j = 0; j < hid_dim_; ++j) state.hidden[j] = sc.o[j] * sc.tanh_cell[j];
    hs.push_back(state.hidden);
    cache_.push_back(std::move(sc));
  }
  return hs;
}

std::vector<std::vector<double>> LstmLayer::backward(
    const std::vector<std::vector<double>>& grad_hidden) {
  const std::size_t T = cache_.size();
  if (grad_hidden.size() != T) throw std::invalid_argument("LstmLayer: grad length mismatch");
  std::vector<std::vector<double>> grad_x(T, std::vector<double>(in_dim_, 0.0));

  std::vector<double> dh(hid_dim_, 0.0), dc(hid_dim_, 0.0);
  std::vector<double> df(hid_dim_), di(hid_dim_), do_(hid_dim_), dg(hid_dim_), dz;
  for (std::size_t tt = T; tt-- > 0;) {
    const StepCache& sc = cache_[tt];
    for (std::size_t j = 0; j < hid_dim_; ++j) dh[j] += grad_hidden[tt][j];

    for (std::size_t j = 0; j < hid_dim_; ++j) {
      const double tc = sc.tanh_cell[j];
      do_[j] = dh[j] * tc * sc.o[j] * (1.0 - sc.o[j]);
      dc[j] += dh[j] * sc.o[j] * (1.0 - tc * tc);
      df[j] = dc[j] * sc.cell_prev[j] * sc.f[j] * (1.0 - sc.f[j]);
      di[j] = dc[j] * sc.g[j] * sc.i[j] * (1.0 - sc.i[j]);
      dg[j] = dc[j] * sc.i[j] * (1.0 - sc.g[j] * sc.g[j]);
    }

    const std::size_t zd = in_dim_ + hid_dim_;
    dz.assign(zd, 0.0);
    auto accumulate_gate = [&](const Tensor& w, Tensor& gw, Tensor& gb,
                               const std::vector<double>& dgate) {
      for (std::size_t j = 0; j < hid_dim_; ++j) {
        const double d = dgate[j];
        gb[j] += d;
        const double* wrow = w.data() + j * zd;
        double* gwrow = gw.data() + j * zd;
        for (std::size_t q = 0; q < zd; ++q) {
          gwrow[q] += d * sc.z[q];
          dz[q] += d * wrow[q];
        }
      }
    };
    accumulate_gate(w_.w_forget, gw_.w_forget, gw_.b_forget, df);
    accumulate_gate(w_.w_input, gw_.w_input, gw_.b_input, di);
    accumulate_gate(w_.w_output, gw_.w_output, gw_.b_output, do_);
    accumulate_gate(w_.w_cand, gw_.w_cand, gw_.b_cand, dg);

    for (std::size_t q = 0; q < in_dim_; ++q) grad_x[tt][q] = dz[q];
    for (std::size_t j = 0; j < hid_dim_; ++j) {
      dh[j] = dz[in_dim_ + j];
      dc[j] *= sc.f[j];  // carry to t-1
    }
  }
  return grad_x;
}

void LstmLayer::register_params(ParamSet& ps, const std::string& prefix) {
  ps.add(prefix + ".w_forget", &w_.w_forget, &gw_.w_forget);
  ps.add(prefix + ".w_input", &w_.w_input, &gw_.w_input);
  ps.add(prefix + ".w_output", &w_.w_output, &gw_.w_output);
  ps.add(prefix + ".w_cand", &w_.w_cand, &gw_.w_cand);
  ps.add(prefix + ".b_forget", &w_.b_forget, &gw_.b_forget);
  ps.add(prefix + ".b_input", &w_.b_input, &gw_.b_input);
  ps.add(prefix + ".b_output", &w_.b_output, &gw_.b_output);
  ps.add(prefix + ".b_cand", &w_.b_cand, &gw_.b_cand);
}

// ---------------------------------------------------------------------------
// Linear
// ---------------------------------------------------------------------------

Linear::Linear(std::size_t in_dim, std::size_t out_dim, Rng& rng)
    : w_(init_weight(out_dim, in_dim, rng)),
      b_(Tensor::zeros({out_dim})),
      gw_(Tensor::zeros({out_dim, in_dim})),
      gb_(Tensor::zeros({out_dim})) {}

Tensor Linear::forward(const Tensor& input) {
  if (input.rank() != 2 || input.dim(1) != w_.dim(1)) {
    throw std::invalid_argument("Linear: input " + input.shape_str() + " does not match weight " +
                                w_.shape_str());
  }
  last_input_ = input;
  const std::size_t n = input.dim(0), in = w_.dim(1), out = w_.dim(0);
  Tensor y({n, out});
  for (std::size_t r = 0; r < n; ++r) {
    const double* x = input.data() + r * in;
    for (std::size_t o = 0; o < out; ++o) {
      const double* wrow = w_.data() + o * in;
      double acc = b_[o];
      for (std::size_t q = 0; q < in; ++q) acc += wrow[q] * x[q];
      y.at(r, o) = acc;
    }
  }
  return y;
}

Tensor Linear::backward(const Tensor& grad_output) {
  const std::size_t n = last_input_.dim(0), in = w_.dim(1), out = w_.dim(0);
  if (grad_output.rank() != 2 || grad_output.dim(0) != n || grad_output.dim(1) != out) {
    throw std::invalid_argument("Linear: grad shape mismatch");
  }
  Tensor gx({n, in});
  for (std::size_t r = 0; r < n; ++r) {
    const double* x = last_input_.data() + r * in;
    const double* go = grad_output.data() + r * out;
    double* gxr = gx.data() + r * in;
    for (std::size_t o = 0; o < out; ++o) {
      const double d = go[o];
      gb_[o] += d;
      const double* wrow = w_.data() + o * in;
      double* gwrow = gw_.data() + o * in;
      for (std::size_t q = 0; q < in; ++q) {
        gwrow[q] += d * x[q];
        gxr[q] += d * wrow[q];
      }
    }
  }
  return gx;
}

void Linear::register_params(ParamSet& ps, const std::string& prefix) {
  ps.add(prefix + ".w", &w_, &gw_);
  ps.add(prefix + ".b", &b_, &gb_);
}

// ---------------------------------------------------------------------------
// ConvLayer
// ---------------------------------------------------------------------------

ConvLayer::ConvLayer(std::size_t k, std::size_t c_in, std::size_t c_out, int stride, int padding,
                     bool relu, Rng& rng)
    : kernels_({k, k, c_in, c_out}),
      bias_(Tensor::zeros({c_out})),
      gk_(Tensor::zeros({k, k, c_in, c_out})),
      gb_(Tensor::zeros({c_out})),
      stride_(stride),
      padding_(padding),
      relu_(relu) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(k * k * c_in));
  rng.fill_uniform(kernels_, -bound, bound);
}

Tensor ConvLayer::forward(const Tensor& input) {
  last_input_ = input;
  Tensor y = conv2d_forward(input, kernels_, stride_, padding_);
  const std::size_t cout = y.dim(2), px = y.dim(0) * y.dim(1);
  for (std::size_t p = 0; p < px; ++p) {
    for (std::size_t c = 0; c < cout; ++c) y[p * cout + c] += bias_[c];
  }
  last_pre_act_ = y;
  if (relu_) {
    for (double& v : y.values()) v = std::max(0.0, v);
  }
  return y;
}

Tensor ConvLayer::backward(const Tensor& grad_output) {
  Tensor g = grad_output;
  if (relu_) {
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (last_pre_act_[i] <= 0.0) g[i] = 0.0;
    }
  }
  const std::size_t cout = g.dim(2), px = g.dim(0) * g.dim(1);
  for (std::size_t p = 0; p < px; ++p) {
    for (std::size_t c = 0; c < cout; ++c) gb_[c] += g[p * cout + c];
  }
  Conv2dGrads cg = conv2d_backward(last_input_, kernels_, stride_, padding_, g);
  axpy(1.0, cg.kernels, gk_);
  return cg.input;
}

void ConvLayer::register_params(ParamSet& ps, const std::string& prefix) {
  ps.add(prefix + ".kernels", &kernels_, &gk_);
  ps.add(prefix + ".bias", &bias_, &gb_);
}

// ---------------------------------------------------------------------------
// BatchNorm layer
// ---------------------------------------------------------------------------

BatchNorm::BatchNorm(std::size_t channels, double eps, double momentum)
    : gamma_(Tensor::full({channels}, 1.0)),
      beta_(Tensor::zeros({channels})),
      ggamma_(Tensor::zeros({channels})),
      gbeta_(Tensor::zeros({channels})),
      running_mean_(Tensor::zeros({channels})),
      running_var_(Tensor::full({channels}, 1.0)),
      enabled_flag_(Tensor::zeros({1})),
      eps_(eps),
      momentum_(momentum) {}

Tensor BatchNorm::forward(const Tensor& input, bool training) {
  if (!enabled()) {
    last_identity_ = true;
    return input;
  }
  last_identity_ = false;
  const std::size_t channels = gamma_.size();
  if (input.size() % channels != 0) {
    throw std::invalid_argument("BatchNorm: channel dimension mismatch");
  }
  const std::size_t rows = input.size() / channels;
  if (rows == 0) throw std::invalid_argument("BatchNorm: zero-size batch");

  last_mean_.assign(channels, 0.0);
  last_var_.assign(channels, 0.0);
  last_rows_ = rows;
  Tensor out(input.shape());
  last_xhat_ = Tensor(input.shape());
  for (std::size_t c = 0; c < channels; ++c) {
    double mean, var;
    if (training) {
      mean = 0.0;
      for (std::size_t r = 0; r < rows; ++r) mean += input[r * channels + c];
      mean /= static_cast<double>(rows);
      var = 0.0;
      for (std::size_t r = 0; r < rows; ++r) {
        const double d = input[r * channels + c] - mean;
        var += d * d;
      }
      var /= static_cast<double>(rows);
      running_mean_[c] = momentum_ * running_mean_[c] + (1.0 - momentum_) * mean;
      running_var_[c] = momentum_ * running_var_[c] + (1.0 - momentum_) * var;
    } else {
      mean = running_mean_[c];
      var = running_var_[c];
    }
    last_mean_[c] = mean;
    last_var_[c] = var;
    const double inv = 1.0 / std::sqrt(var + eps_);
    for (std::size_t r = 0; r < rows; ++r) {
      const double xh = (input[r * channels + c] - mean) * inv;
      last_xhat_[r * channels + c] = xh;
      out[r * channels + c] = gamma_[c] * xh + beta_[c];
    }
  }
  return out;
}

Tensor BatchNorm::backward(const Tensor& grad_output) {
  if (last_identity_) return grad_output;
  const std::size_t channels = gamma_.size();
  const std::size_t rows = last_rows_;
  Tensor gx(grad_output.shape());
  for (std::size_t c = 0; c < channels; ++c) {
    double sum_dy = 0.0, sum_dy_xhat = 0.0;
    for (std::size_t r = 0; r < rows; ++r) {
      const double dy = grad_output[r * channels + c];
      sum_dy += dy;
      sum_dy_xhat += dy * last_xhat_[r * channels + c];
    }
    ggamma_[c] += sum_dy_xhat;
    gbeta_[c] += sum_dy;
    const double inv = 1.0 / std::sqrt(last_var_[c] + eps_);
    const double n = static_cast<double>(rows);
    for (std::size_t r = 0; r < rows; ++r) {
      const double dy = grad_output[r * channels + c];
      const double xh = last_xhat_[r * channels + c];
      gx[r * channels + c] = gamma_[c] * inv / n * (n * dy - sum_dy - xh * sum_dy_xhat);
    }
  }
  return gx;
}

void BatchNorm::register_params(ParamSet& ps, const std::string& prefix) {
  ps.add(prefix + ".gamma", &gamma_, &ggamma_);
  ps.add(prefix + ".beta", &beta_, &gbeta_);
  // Running statistics and the enable flag ride along in the checkpoint but
  // are never touched by the optimizer.
  ps.add(prefix + ".running_mean", &running_mean_, nullptr);
  ps.add(prefix + ".running_var", &running_var_, nullptr);
  ps.add(prefix + ".enabled", &enabled_flag_, nullptr);
}

// ---------------------------------------------------------------------------
// Optimizer
// ---------------------------------------------------------------------------

void OptimizerConfig::validate() const {
  if (learning_rate <= 0.0) throw std::invalid_argument("OptimizerConfig: learning rate must be positive");
  long prev = -1;
  for (const auto& [step, rate] : schedule) {
    if (step <= prev) throw std::invalid_argument("OptimizerConfig: schedule steps must be strictly increasing");
    if (rate <= 0.0) throw std::invalid_argument("OptimizerConfig: scheduled rates must be positive");
    prev = step;
  }
}

double OptimizerConfig::learning_rate_at(long step) const {
  double lr = learning_rate;
  for (const auto& [s, rate] : schedule) {
    if (step >= s) lr = rate;
    else break;
  }
  return lr;
}

void sgd_update(Tensor& params, const Tensor& grads, long step, const OptimizerConfig& config) {
  if (!params.same_shape(grads)) {
    throw std::invalid_argument("sgd_update: param shape " + params.shape_str() +
                                " does not match grad shape " + grads.shape_str());
  }
  const double lr = config.learning_rate_at(step);
  double* p = params.data();
  const double* g = grads.data();
  for (std::size_t i = 0; i < params.size(); ++i) p[i] -= lr * g[i];
}

// ---------------------------------------------------------------------------
// Finite differences
// ---------------------------------------------------------------------------

double finite_difference_check(const std::function<double(const Tensor&)>& loss_fn,
                               const Tensor& params, const Tensor& analytic_grads, double h,
                               std::size_t max_coords, std::uint64_t seed) {
  if (h <= 0.0) throw std::invalid_argument("finite_difference_check: h must be positive");
  if (!params.same_shape(analytic_grads)) {
    throw std::invalid_argument("finite_difference_check: shape mismatch");
  }
  std::vector<std::size_t> coords;
  if (max_coords == 0 || max_coords >= params.size()) {
    coords.resize(params.size());
    for (std::size_t i = 0; i < coords.size(); ++i) coords[i] = i;
  } else {
    Rng rng(seed);
    for (std::size_t i = 0; i < max_coords; ++i) {
      coords.push_back(static_cast<std::size_t>(rng.next_u64() % params.size()));
    }
  }

  Tensor probe = params;
  double worst = 0.0;
  for (std::size_t idx : coords) {
    const double saved = probe[idx];
    probe[idx] = saved + h;
    const double up = loss_fn(probe);
    probe[idx] = saved - h;
    const double dn = loss_fn(probe);
    probe[idx] = saved;
    if (!std::isfinite(up) || !std::isfinite(dn)) {
      throw NumericError("finite_difference_check: loss is non-finite near the probe point");
    }
    const double central = (up - dn) / (2.0 * h);
    const double a = analytic_grads[idx];
    const double rel = std::abs(a - central) / std::max(1e-8, std::abs(a) + std::abs(central));
    worst = std::max(worst, rel);
  }
  return worst;
}

}  // namespace wsod
