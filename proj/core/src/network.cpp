#include "capture/network.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "capture/error.hpp"

namespace capture::nn {

namespace {

using nlohmann::json;

class Conv2D final : public Layer {
 public:
  Conv2D(int in, int out, int kernel, int stride, int pad)
      : in_(in), out_(out), k_(kernel), stride_(stride), pad_(pad),
        params_(static_cast<std::size_t>(out) * in * kernel * kernel + out, 0.0) {
    if (in <= 0 || out <= 0 || kernel <= 0 || stride <= 0 || pad < 0) {
      throw InvalidArgument("conv2d: invalid geometry");
    }
  }

  std::string type() const override { return "conv2d"; }

  Shape3 output_shape(Shape3 in) const override {
    if (in.channels != in_) throw InvalidArgument("conv2d: channel mismatch");
    return {out_, (in.height + 2 * pad_ - k_) / stride_ + 1, (in.width + 2 * pad_ - k_) / stride_ + 1};
  }

  void forward(Shape3 in, std::span<const double> x, std::span<double> y) const override {
    const Shape3 o = output_shape(in);
    const double* w = params_.data();
    const double* b = w + weight_count();
    for (int oc = 0; oc < out_; ++oc) {
      double* yo = y.data() + static_cast<std::size_t>(oc) * o.height * o.width;
      std::fill(yo, yo + o.height * o.width, b[oc]);
      for (int ic = 0; ic < in_; ++ic) {
        const double* xi = x.data() + static_cast<std::size_t>(ic) * in.height * in.width;
        for (int ky = 0; ky < k_; ++ky) {
          for (int kx = 0; kx < k_; ++kx) {
            const double wv = w[((static_cast<std::size_t>(oc) * in_ + ic) * k_ + ky) * k_ + kx];
            for (int oy = 0; oy < o.height; ++oy) {
              const int iy = oy * stride_ - pad_ + ky;
              if (iy < 0 || iy >= in.height) continue;
              const double* xrow = xi + static_cast<std::size_t>(iy) * in.width;
              double* yrow = yo + static_cast<std::size_t>(oy) * o.width;
              for (int ox = 0; ox < o.width; ++ox) {
                const int ix = ox * stride_ - pad_ + kx;
                if (ix < 0 || ix >= in.width) continue;
                yrow[ox] += wv * xrow[ix];
              }
            }
          }
        }
      }
    }
  }

  void backward(Shape3 in, std::span<const double> x, std::span<const double>,
                std::span<const double> gy, std::span<double> gx,
                std::span<double> gparams) const override {
    const Shape3 o = output_shape(in);
    const double* w = params_.data();
    const bool want_params = !gparams.empty();
    for (int oc = 0; oc < out_; ++oc) {
      const double* go = gy.data() + static_cast<std::size_t>(oc) * o.height * o.width;
      if (want_params) {
        double& gb = gparams[weight_count() + oc];
        for (int i = 0; i < o.height * o.width; ++i) gb += go[i];
      }
      for (int ic = 0; ic < in_; ++ic) {
        const double* xi = x.data() + static_cast<std::size_t>(ic) * in.height * in.width;
        double* gxi = gx.data() + static_cast<std::size_t>(ic) * in.height * in.width;
        for (int ky = 0; ky < k_; ++ky) {
          for (int kx = 0; kx < k_; ++kx) {
            const std::size_t wi = ((static_cast<std::size_t>(oc) * in_ + ic) * k_ + ky) * k_ + kx;
            const double wv = w[wi];
            double gw = 0.0;
            for (int oy = 0; oy < o.height; ++oy) {
              const int iy = oy * stride_ - pad_ + ky;
              if (iy < 0 || iy >= in.height) continue;
              const double* grow = go + static_cast<std::size_t>(oy) * o.width;
              const std::size_t row = static_cast<std::size_t>(iy) * in.width;
              for (int ox = 0; ox < o.width; ++ox) {
                const int ix = ox * stride_ - pad_ + kx;
                if (ix < 0 || ix >= in.width) continue;
                gxi[row + ix] += wv * grow[ox];
                gw += xi[row + ix] * grow[ox];
              }
            }
            if (want_params) gparams[wi] += gw;
          }
        }
      }
    }
  }

  std::span<double> params() noexcept override { return params_; }
  std::span<const double> params() const noexcept override { return params_; }

  void init(Rng& rng, Shape3) override {
    const double bound = std::sqrt(6.0 / (in_ * k_ * k_));
    for (std::size_t i = 0; i < weight_count(); ++i) params_[i] = uniform(rng, -bound, bound);
    std::fill(params_.begin() + static_cast<std::ptrdiff_t>(weight_count()), params_.end(), 0.0);
  }

  json to_json() const override {
    return {{"type", type()}, {"in", in_}, {"out", out_}, {"kernel", k_},
            {"stride", stride_}, {"pad", pad_}, {"params", params_}};
  }

  std::unique_ptr<Layer> clone() const override { return std::make_unique<Conv2D>(*this); }

 private:
  std::size_t weight_count() const noexcept {
    return static_cast<std::size_t>(out_) * in_ * k_ * k_;
  }

  int in_, out_, k_, stride_, pad_;
  std::vector<double> params_;
};

class Dense final : public Layer {
 public:
  Dense(int in, int out)
      : in_(in), out_(out), params_(static_cast<std::size_t>(in) * out + out, 0.0) {
    if (in <= 0 || out <= 0) throw InvalidArgument("dense: invalid geometry");
  }

  std::string type() const override { return "dense"; }

  Shape3 output_shape(Shape3 in) const override {
    if (static_cast<int>(in.size()) != in_) {
      throw InvalidArgument("dense: expected " + std::to_string(in_) + " inputs, got " +
                            std::to_string(in.size()));
    }
    return {out_, 1, 1};
  }

  void forward(Shape3, std::span<const double> x, std::span<double> y) const override {
    const double* w = params_.data();
    const double* b = w + static_cast<std::size_t>(in_) * out_;
    for (int o = 0; o < out_; ++o) {
      const double* row = w + static_cast<std::size_t>(o) * in_;
      double acc = b[o];
      for (int i = 0; i < in_; ++i) acc += row[i] * x[i];
      y[o] = acc;
    }
  }

  void backward(Shape3, std::span<const double> x, std::span<const double>,
                std::span<const double> gy, std::span<double> gx,
                std::span<double> gparams) const override {
    const double* w = params_.data();
    const std::size_t nw = static_cast<std::size_t>(in_) * out_;
    for (int o = 0; o < out_; ++o) {
      const double g = gy[o];
      if (g == 0.0) continue;
      const double* row = w + static_cast<std::size_t>(o) * in_;
      for (int i = 0; i < in_; ++i) gx[i] += row[i] * g;
      if (!gparams.empty()) {
        double* grow = gparams.data() + static_cast<std::size_t>(o) * in_;
        for (int i = 0; i < in_; ++i) grow[i] += x[i] * g;
        gparams[nw + o] += g;
      }
    }
  }

  std::span<double> params() noexcept override { return params_; }
  std::span<const double> params() const noexcept override { return params_; }

  void init(Rng& rng, Shape3) override {
    const double bound = std::sqrt(6.0 / in_);
    const std::size_t nw = static_cast<std::size_t>(in_) * out_;
    for (std::size_t i = 0; i < nw; ++i) params_[i] = uniform(rng, -bound, bound);
    std::fill(params_.begin() + static_cast<std::ptrdiff_t>(nw), params_.end(), 0.0);
  }

  json to_json() const override {
    return {{"type", type()}, {"in", in_}, {"out", out_}, {"params", params_}};
  }

  std::unique_ptr<Layer> clone() const override { return std::make_unique<Dense>(*this); }

 private:
  int in_, out_;
  std::vector<double> params_;
};

class ReLU final : public Layer {
 public:
  std::string type() const override { return "relu"; }
  Shape3 output_shape(Shape3 in) const override { return in; }
  void forward(Shape3, std::span<const double> x, std::span<double> y) const override {
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] > 0.0 ? x[i] : 0.0;
  }
  void backward(Shape3, std::span<const double> x, std::span<const double>,
                std::span<const double> gy, std::span<double> gx,
                std::span<double>) const override {
    for (std::size_t i = 0; i < x.size(); ++i) {
      if (x[i] > 0.0) gx[i] += gy[i];
    }
  }
  std::unique_ptr<Layer> clone() const override { return std::make_unique<ReLU>(*this); }
};

class Tanh final : public Layer {
 public:
  std::string type() const override { return "tanh"; }
  Shape3 output_shape(Shape3 in) const override { return in; }
  void forward(Shape3, std::span<const double> x, std::span<double> y) const override {
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = std::tanh(x[i]);
  }
  void backward(Shape3, std::span<const double>, std::span<const double> y,
                std::span<const double> gy, std::span<double> gx,
                std::span<double>) const override {
    for (std::size_t i = 0; i < y.size(); ++i) gx[i] += gy[i] * (1.0 - y[i] * y[i]);
  }
  std::unique_ptr<Layer> clone() const override { return std::make_unique<Tanh>(*this); }
};

class AvgPool final : public Layer {
 public:
  explicit AvgPool(int k) : k_(k) {
    if (k <= 0) throw InvalidArgument("avg_pool: kernel must be positive");
  }
  std::string type() const override { return "avg_pool"; }
  Shape3 output_shape(Shape3 in) const override {
    return {in.channels, in.height / k_, in.width / k_};
  }
  void forward(Shape3 in, std::span<const double> x, std::span<double> y) const override {
    const Shape3 o = output_shape(in);
    const double norm = 1.0 / (k_ * k_);
    for (int c = 0; c < o.channels; ++c) {
      for (int oy = 0; oy < o.height; ++oy) {
        for (int ox = 0; ox < o.width; ++ox) {
          double acc = 0.0;
          for (int dy = 0; dy < k_; ++dy) {
            for (int dx = 0; dx < k_; ++dx) {
              acc += x[(static_cast<std::size_t>(c) * in.height + oy * k_ + dy) * in.width + ox * k_ + dx];
            }
          }
          y[(static_cast<std::size_t>(c) * o.height + oy) * o.width + ox] = acc * norm;
        }
      }
    }
  }
  void backward(Shape3 in, std::span<const double>, std::span<const double>,
                std::span<const double> gy, std::span<double> gx,
                std::span<double>) const override {
    const Shape3 o = output_shape(in);
    const double norm = 1.0 / (k_ * k_);
    for (int c = 0; c < o.channels; ++c) {
      for (int oy = 0; oy < o.height; ++oy) {
        for (int ox = 0; ox < o.width; ++ox) {
          const double g = gy[(static_cast<std::size_t>(c) * o.height + oy) * o.width + ox] * norm;
          for (int dy = 0; dy < k_; ++dy) {
            for (int dx = 0; dx < k_; ++dx) {
              gx[(static_cast<std::size_t>(c) * in.height + oy * k_ + dy) * in.width + ox * k_ + dx] += g;
            }
          }
        }
      }
    }
  }
  json to_json() const override { return {{"type", type()}, {"kernel", k_}}; }
  std::unique_ptr<Layer> clone() const override { return std::make_unique<AvgPool>(*this); }

 private:
  int k_;
};

class GlobalAvgPool final : public Layer {
 public:
  std::string type() const override { return "global_avg_pool"; }
  Shape3 output_shape(Shape3 in) const override { return {in.channels, 1, 1}; }
  void forward(Shape3 in, std::span<const double> x, std::span<double> y) const override {
    const std::size_t plane = static_cast<std::size_t>(in.height) * in.width;
    for (int c = 0; c < in.channels; ++c) {
      const double* xc = x.data() + c * plane;
      y[c] = std::accumulate(xc, xc + plane, 0.0) / static_cast<double>(plane);
    }
  }
  void backward(Shape3 in, std::span<const double>, std::span<const double>,
                std::span<const double> gy, std::span<double> gx,
                std::span<double>) const override {
    const std::size_t plane = static_cast<std::size_t>(in.height) * in.width;
    for (int c = 0; c < in.channels; ++c) {
      const double g = gy[c] / static_cast<double>(plane);
      for (std::size_t i = 0; i < plane; ++i) gx[c * plane + i] += g;
    }
  }
  std::unique_ptr<Layer> clone() const override { return std::make_unique<GlobalAvgPool>(*this); }
};

void load_params(Layer& layer, const json& j) {
  const auto values = j.at("params").get<std::vector<double>>();
  auto dst = layer.params();
  if (values.size() != dst.size()) {
    throw ModelLoadError(layer.type() + ": expected " + std::to_string(dst.size()) +
                         " parameters, found " + std::to_string(values.size()));
  }
  std::copy(values.begin(), values.end(), dst.begin());
}

}  // namespace

json Layer::to_json() const { return {{"type", type()}}; }

std::unique_ptr<Layer> conv2d(int in_channels, int out_channels, int kernel, int stride, int pad) {
  return std::make_unique<Conv2D>(in_channels, out_channels, kernel, stride, pad);
}
std::unique_ptr<Layer> dense(int in_features, int out_features) {
  return std::make_unique<Dense>(in_features, out_features);
}
std::unique_ptr<Layer> relu() { return std::make_unique<ReLU>(); }
std::unique_ptr<Layer> tanh_layer() { return std::make_unique<Tanh>(); }
std::unique_ptr<Layer> avg_pool(int kernel) { return std::make_unique<AvgPool>(kernel); }
std::unique_ptr<Layer> global_avg_pool() { return std::make_unique<GlobalAvgPool>(); }

std::unique_ptr<Layer> layer_from_json(const json& j) {
  const auto type = j.at("type").get<std::string>();
  if (type == "conv2d") {
    auto layer = conv2d(j.at("in"), j.at("out"), j.at("kernel"), j.at("stride"), j.at("pad"));
    load_params(*layer, j);
    return layer;
  }
  if (type == "dense") {
    auto layer = dense(j.at("in"), j.at("out"));
    load_params(*layer, j);
    return layer;
  }
  if (type == "relu") return relu();
  if (type == "tanh") return tanh_layer();
  if (type == "avg_pool") return avg_pool(j.at("kernel"));
  if (type == "global_avg_pool") return global_avg_pool();
  throw ModelLoadError("unknown layer type '" + type + "'");
}

Network::Network(const Network& other) : input_(other.input_) {
  for (const auto& l : other.layers_) layers_.push_back(l->clone());
}

Network& Network::operator=(const Network& other) {
  if (this != &other) {
    Network copy(other);
    *this = std::move(copy);
  }
  return *this;
}

Network& Network::add(std::unique_ptr<Layer> layer) {
  Shape3 s = output_shape();
  (void)layer->output_shape(s);  // validates compatibility
  layers_.push_back(std::move(layer));
  return *this;
}

Shape3 Network::output_shape() const {
  Shape3 s = input_;
  for (const auto& l : layers_) s = l->output_shape(s);
  return s;
}

std::size_t Network::param_count() const {
  std::size_t n = 0;
  for (const auto& l : layers_) n += l->params().size();
  return n;
}

std::vector<double> Network::forward(std::span<const double> x) const {
  if (x.size() != input_.size()) throw InvalidArgument("network input size mismatch");
  std::vector<double> cur(x.begin(), x.end());
  std::vector<double> next;
  Shape3 s = input_;
  for (const auto& l : layers_) {
    const Shape3 o = l->output_shape(s);
    next.assign(o.size(), 0.0);
    l->forward(s, cur, next);
    cur.swap(next);
    s = o;
  }
  return cur;
}

std::vector<double> Network::forward_trace(std::span<const double> x, Trace& trace) const {
  if (x.size() != input_.size()) throw InvalidArgument("network input size mismatch");
  trace.activations.resize(layers_.size() + 1);
  trace.activations[0].assign(x.begin(), x.end());
  Shape3 s = input_;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const Shape3 o = layers_[i]->output_shape(s);
    trace.activations[i + 1].assign(o.size(), 0.0);
    layers_[i]->forward(s, trace.activations[i], trace.activations[i + 1]);
    s = o;
  }
  return trace.activations.back();
}

std::vector<double> Network::backward(const Trace& trace, std::span<const double> grad_logits,
                                      std::span<double> gparams) const {
  std::vector<Shape3> shapes{input_};
  for (const auto& l : layers_) shapes.push_back(l->output_shape(shapes.back()));
  std::vector<double> g(grad_logits.begin(), grad_logits.end());
  std::size_t offset = gparams.empty() ? 0 : param_count();
  for (std::size_t i = layers_.size(); i-- > 0;) {
    std::vector<double> gx(shapes[i].size(), 0.0);
    const std::size_t np = layers_[i]->params().size();
    std::span<double> gp;
    if (!gparams.empty()) {
      offset -= np;
      gp = gparams.subspan(offset, np);
    }
    layers_[i]->backward(shapes[i], trace.activations[i], trace.activations[i + 1], g, gx, gp);
    g.swap(gx);
  }
  return g;
}

void Network::init(Rng& rng) {
  Shape3 s = input_;
  for (auto& l : layers_) {
    l->init(rng, s);
    s = l->output_shape(s);
  }
}

std::vector<double> Network::flat_params() const {
  std::vector<double> flat;
  flat.reserve(param_count());
  for (const auto& l : layers_) {
    auto p = l->params();
    flat.insert(flat.end(), p.begin(), p.end());
  }
  return flat;
}

void Network::set_flat_params(std::span<const double> flat) {
  if (flat.size() != param_count()) throw InvalidArgument("parameter count mismatch");
  std::size_t offset = 0;
  for (auto& l : layers_) {
    auto p = l->params();
    std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(offset), p.size(), p.begin());
    offset += p.size();
  }
}

nlohmann::json Network::to_json() const {
  json layers = json::array();
  for (const auto& l : layers_) layers.push_back(l->to_json());
  return {{"input", {input_.channels, input_.height, input_.width}}, {"layers", layers}};
}

Network Network::from_json(const nlohmann::json& j) {
  const auto in = j.at("input").get<std::vector<int>>();
  if (in.size() != 3) throw ModelLoadError("network input must be [channels, height, width]");
  Network net({in[0], in[1], in[2]});
  for (const auto& lj : j.at("layers")) net.add(layer_from_json(lj));
  return net;
}

std::vector<double> log_softmax(std::span<const double> logits) {
  const double m = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (double z : logits) sum += std::exp(z - m);
  const double lse = m + std::log(sum);
  std::vector<double> out(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) out[i] = logits[i] - lse;
  return out;
}

std::vector<double> softmax(std::span<const double> logits) {
  auto out = log_softmax(logits);
  for (double& v : out) v = std::exp(v);
  return out;
}

double train(Network& net, std::span<const LabeledSample> data, const TrainConfig& cfg) {
  if (data.empty()) throw InvalidArgument("train: empty dataset");
  Rng rng(cfg.seed);
  const std::size_t np = net.param_count();
  std::vector<double> m(np, 0.0), v(np, 0.0), grad(np);
  constexpr double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  Network::Trace trace;
  long step = 0;
  double epoch_loss = 0.0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      std::fill(grad.begin(), grad.end(), 0.0);
      for (std::size_t k = start; k < end; ++k) {
        const auto& sample = data[order[k]];
        auto logits = net.forward_trace(sample.input, trace);
        auto probs = softmax(logits);
        epoch_loss -= std::log(std::max(probs[sample.label], 1e-300));
        probs[sample.label] -= 1.0;
        net.backward(trace, probs, grad);
      }
      const double inv = 1.0 / static_cast<double>(end - start);
      ++step;
      const double c1 = 1.0 - std::pow(beta1, step);
      const double c2 = 1.0 - std::pow(beta2, step);
      auto params = net.flat_params();
      for (std::size_t i = 0; i < np; ++i) {
        const double g = grad[i] * inv;
        m[i] = beta1 * m[i] + (1 - beta1) * g;
        v[i] = beta2 * v[i] + (1 - beta2) * g * g;
        params[i] -= cfg.learning_rate * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps);
      }
      net.set_flat_params(params);
    }
    epoch_loss /= static_cast<double>(data.size());
  }
  return epoch_loss;
}

}  // namespace capture::nn
