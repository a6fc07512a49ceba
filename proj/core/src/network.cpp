#include "spft/network.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>

#include <cblas.h>

namespace spft {

namespace {

constexpr std::size_t kNoSlice = std::numeric_limits<std::size_t>::max();

template <class... Ts>
struct Overloaded : Ts... {
    using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

bool all_finite(std::span<const double> v) {
    return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

struct ConvGeometry {
    std::size_t in_c, in_h, in_w, out_c, out_h, out_w, kh, kw, stride, pad;
    [[nodiscard]] std::size_t patch() const { return in_c * kh * kw; }
    [[nodiscard]] std::size_t positions() const { return out_h * out_w; }
};

ConvGeometry conv_geometry(const Conv2D& c, const Shape3& in, const Shape3& out) {
    return {in.channels,
            in.height,
            in.width,
            out.channels,
            out.height,
            out.width,
            static_cast<std::size_t>(c.kernel_h),
            static_cast<std::size_t>(c.kernel_w),
            static_cast<std::size_t>(c.stride),
            static_cast<std::size_t>(c.padding)};
}

// col[k][p] with k = (ic*kh + r)*kw + s and p the output position.
void im2col(std::span<const double> in, const ConvGeometry& g, std::vector<double>& col) {
    const std::size_t P = g.positions();
    col.assign(g.patch() * P, 0.0);
    for (std::size_t ic = 0; ic < g.in_c; ++ic) {
        for (std::size_t r = 0; r < g.kh; ++r) {
            for (std::size_t s = 0; s < g.kw; ++s) {
                double* row = col.data() + ((ic * g.kh + r) * g.kw + s) * P;
                for (std::size_t oy = 0; oy < g.out_h; ++oy) {
                    const std::ptrdiff_t y = static_cast<std::ptrdiff_t>(oy * g.stride + r) -
                                             static_cast<std::ptrdiff_t>(g.pad);
                    if (y < 0 || y >= static_cast<std::ptrdiff_t>(g.in_h)) continue;
                    const double* src = in.data() + (ic * g.in_h + static_cast<std::size_t>(y)) * g.in_w;
                    for (std::size_t ox = 0; ox < g.out_w; ++ox) {
                        const std::ptrdiff_t x = static_cast<std::ptrdiff_t>(ox * g.stride + s) -
                                                 static_cast<std::ptrdiff_t>(g.pad);
                        if (x < 0 || x >= static_cast<std::ptrdiff_t>(g.in_w)) continue;
                        row[oy * g.out_w + ox] = src[x];
                    }
                }
            }
        }
    }
}

void col2im_add(std::span<const double> col, const ConvGeometry& g, std::span<double> din) {
    const std::size_t P = g.positions();
    for (std::size_t ic = 0; ic < g.in_c; ++ic) {
        for (std::size_t r = 0; r < g.kh; ++r) {
            for (std::size_t s = 0; s < g.kw; ++s) {
                const double* row = col.data() + ((ic * g.kh + r) * g.kw + s) * P;
                for (std::size_t oy = 0; oy < g.out_h; ++oy) {
                    const std::ptrdiff_t y = static_cast<std::ptrdiff_t>(oy * g.stride + r) -
                                             static_cast<std::ptrdiff_t>(g.pad);
                    if (y < 0 || y >= static_cast<std::ptrdiff_t>(g.in_h)) continue;
                    double* dst = din.data() + (ic * g.in_h + static_cast<std::size_t>(y)) * g.in_w;
                    for (std::size_t ox = 0; ox < g.out_w; ++ox) {
                        const std::ptrdiff_t x = static_cast<std::ptrdiff_t>(ox * g.stride + s) -
                                                 static_cast<std::ptrdiff_t>(g.pad);
                        if (x < 0 || x >= static_cast<std::ptrdiff_t>(g.in_w)) continue;
                        dst[x] += row[oy * g.out_w + ox];
                    }
                }
            }
        }
    }
}

// C[i][j] += sum_k A(i, k) * B[k][j] with A(i, k) = a[i * a_rs + k * a_cs];
// one of a_rs, a_cs must be 1 (A stored row-major or transposed).
void gemm_acc(std::size_t M, std::size_t N, std::size_t Kd, const double* a, std::size_t a_rs, std::size_t a_cs,
              const double* b, std::size_t ldb, double* c, std::size_t ldc) {
    // Workers fan out above this level; keep BLAS single-threaded and its summation order fixed.
    static const bool single = [] {
        openblas_set_num_threads(1);
        return true;
    }();
    (void)single;
    const bool trans = a_cs != 1;
    const auto i = [](std::size_t v) { return static_cast<blasint>(v); };
    cblas_dgemm(CblasRowMajor, trans ? CblasTrans : CblasNoTrans, CblasNoTrans, i(M), i(N), i(Kd), 1.0, a,
                i(trans ? a_cs : a_rs), b, i(ldb), 1.0, c, i(ldc));
}

double dot(const double* a, const double* b, std::size_t n) {
    double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        s0 += a[i] * b[i];
        s1 += a[i + 1] * b[i + 1];
        s2 += a[i + 2] * b[i + 2];
        s3 += a[i + 3] * b[i + 3];
    }
    for (; i < n; ++i) s0 += a[i] * b[i];
    return (s0 + s1) + (s2 + s3);
}

// Writes softmax(logits) into probs and returns log-sum-exp.
double softmax(std::span<const double> logits, std::span<double> probs) {
    const double zmax = *std::max_element(logits.begin(), logits.end());
    double sum = 0.0;
    for (std::size_t k = 0; k < logits.size(); ++k) {
        probs[k] = std::exp(logits[k] - zmax);
        sum += probs[k];
    }
    for (double& p : probs) p /= sum;
    return zmax + std::log(sum);
}

}  // namespace

std::string layer_name(const LayerSpec& spec) {
    return std::visit(Overloaded{[](const Conv2D&) { return std::string("conv"); },
                                 [](const FullyConnected&) { return std::string("fc"); },
                                 [](const ReLU&) { return std::string("relu"); },
                                 [](const MaxPool&) { return std::string("maxpool"); },
                                 [](const GlobalAvgPool&) { return std::string("gap"); },
                                 [](const SoftmaxHead&) { return std::string("head"); }},
                      spec);
}

std::vector<std::size_t> ParamVector::shared_indices() const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < shared_mask.size(); ++i)
        if (shared_mask[i]) out.push_back(i);
    return out;
}

std::vector<std::size_t> ParamVector::fresh_indices() const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < shared_mask.size(); ++i)
        if (!shared_mask[i]) out.push_back(i);
    return out;
}

std::vector<double> ParamVector::shared_values() const {
    std::vector<double> out;
    for (std::size_t i = 0; i < shared_mask.size(); ++i)
        if (shared_mask[i]) out.push_back(values[i]);
    return out;
}

struct Network::Workspace {
    std::vector<std::vector<double>> outs;
    std::vector<std::vector<std::size_t>> argmax;
    std::vector<double> probs;
    std::vector<std::vector<double>> cols;  // im2col of each conv input, reused by the backward pass
    std::vector<double> colT;
    std::vector<double> dcol;
    std::vector<double> dcur;
    std::vector<double> dprev;
    std::span<const double> input;
};

Network::Network(Shape3 input_shape, std::vector<LayerSpec> layers)
    : input_shape_(input_shape), layers_(std::move(layers)) {
    if (input_shape_.size() == 0) throw std::invalid_argument("network: empty input shape");
    if (layers_.empty() || !std::holds_alternative<SoftmaxHead>(layers_.back())) {
        throw std::invalid_argument("network: last layer must be a SoftmaxHead");
    }
    Shape3 cur = input_shape_;
    std::size_t offset = 0;
    slice_of_layer_.assign(layers_.size(), kNoSlice);
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        const auto& spec = layers_[i];
        if (std::holds_alternative<SoftmaxHead>(spec) && i + 1 != layers_.size()) {
            throw std::invalid_argument("network: SoftmaxHead must be the last layer");
        }
        auto add_slice = [&](std::size_t out_units, std::size_t fan_in, std::vector<std::size_t> dims) {
            ParamSlice s;
            s.layer = i;
            s.offset = offset;
            s.out_units = out_units;
            s.fan_in = fan_in;
            s.length = out_units * (fan_in + 1);
            s.kernel_dims = std::move(dims);
            offset += s.length;
            slice_of_layer_[i] = params_.layout.size();
            params_.layout.push_back(std::move(s));
        };
        std::visit(Overloaded{
                       [&](const Conv2D& c) {
                           if (c.out_channels <= 0 || c.kernel_h <= 0 || c.kernel_w <= 0 || c.stride <= 0 ||
                               c.padding < 0) {
                               throw std::invalid_argument("network: invalid Conv2D parameters");
                           }
                           const auto ph = static_cast<std::ptrdiff_t>(cur.height) + 2 * c.padding - c.kernel_h;
                           const auto pw = static_cast<std::ptrdiff_t>(cur.width) + 2 * c.padding - c.kernel_w;
                           if (ph < 0 || pw < 0) throw std::invalid_argument("network: conv kernel larger than input");
                           Shape3 out{static_cast<std::size_t>(c.out_channels),
                                      static_cast<std::size_t>(ph / c.stride + 1),
                                      static_cast<std::size_t>(pw / c.stride + 1)};
                           const std::size_t kh = static_cast<std::size_t>(c.kernel_h);
                           const std::size_t kw = static_cast<std::size_t>(c.kernel_w);
                           add_slice(out.channels, cur.channels * kh * kw, {out.channels, cur.channels, kh, kw});
                           cur = out;
                       },
                       [&](const FullyConnected& f) {
                           if (f.out_dim <= 0) throw std::invalid_argument("network: invalid FullyConnected size");
                           add_slice(static_cast<std::size_t>(f.out_dim), cur.size(),
                                     {static_cast<std::size_t>(f.out_dim), cur.size()});
                           cur = Shape3{static_cast<std::size_t>(f.out_dim), 1, 1};
                       },
                       [&](const ReLU&) {},
                       [&](const MaxPool& m) {
                           if (m.k <= 0 || m.stride <= 0) throw std::invalid_argument("network: invalid MaxPool");
                           if (cur.height < static_cast<std::size_t>(m.k) || cur.width < static_cast<std::size_t>(m.k)) {
                               throw std::invalid_argument("network: pool window larger than input");
                           }
                           cur = Shape3{cur.channels, (cur.height - m.k) / m.stride + 1, (cur.width - m.k) / m.stride + 1};
                       },
                       [&](const GlobalAvgPool&) { cur = Shape3{cur.channels, 1, 1}; },
                       [&](const SoftmaxHead& h) {
                           if (h.num_classes <= 0) throw std::invalid_argument("network: invalid class count");
                           add_slice(static_cast<std::size_t>(h.num_classes), cur.size(),
                                     {static_cast<std::size_t>(h.num_classes), cur.size()});
                           cur = Shape3{static_cast<std::size_t>(h.num_classes), 1, 1};
                       }},
                   spec);
        shapes_.push_back(cur);
    }
    params_.values.assign(offset, 0.0);
    params_.shared_mask.assign(offset, true);
    const ParamSlice& head = params_.layout.back();
    for (std::size_t j = head.offset; j < head.offset + head.length; ++j) params_.shared_mask[j] = false;
}

int Network::num_classes() const { return std::get<SoftmaxHead>(layers_.back()).num_classes; }

std::vector<ParamSlice> Network::shared_slices() const {
    return {params_.layout.begin(), params_.layout.end() - 1};
}

void Network::initialize(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    for (const ParamSlice& s : params_.layout) {
        const bool is_head = std::holds_alternative<SoftmaxHead>(layers_[s.layer]);
        const double a = is_head ? std::sqrt(6.0 / static_cast<double>(s.fan_in + s.out_units))
                                 : std::sqrt(6.0 / static_cast<double>(s.fan_in));
        std::uniform_real_distribution<double> dist(-a, a);
        for (std::size_t j = 0; j < s.out_units * s.fan_in; ++j) params_.values[s.offset + j] = dist(rng);
        for (std::size_t u = 0; u < s.out_units; ++u) params_.values[s.bias_index(u)] = 0.0;
    }
}

void Network::forward_one(std::span<const double> x, Workspace& ws) const {
    ws.input = x;
    ws.outs.resize(layers_.size());
    ws.argmax.resize(layers_.size());
    ws.cols.resize(layers_.size());
    const double* w = params_.values.data();
    Shape3 in_shape = input_shape_;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        std::span<const double> in = i == 0 ? x : std::span<const double>(ws.outs[i - 1]);
        std::vector<double>& out = ws.outs[i];
        const Shape3& os = shapes_[i];
        out.assign(os.size(), 0.0);
        std::visit(Overloaded{
                       [&](const Conv2D& c) {
                           const ParamSlice& s = params_.layout[slice_of_layer_[i]];
                           const ConvGeometry g = conv_geometry(c, in_shape, os);
                           im2col(in, g, ws.cols[i]);
                           const std::size_t P = g.positions();
                           for (std::size_t oc = 0; oc < g.out_c; ++oc) {
                               std::fill_n(out.data() + oc * P, P, w[s.bias_index(oc)]);
                           }
                           gemm_acc(g.out_c, P, g.patch(), w + s.offset, s.fan_in, 1, ws.cols[i].data(), P, out.data(), P);
                       },
                       [&](const FullyConnected&) {
                           const ParamSlice& s = params_.layout[slice_of_layer_[i]];
                           for (std::size_t u = 0; u < s.out_units; ++u) {
                               out[u] = w[s.bias_index(u)] + dot(w + s.weight_index(u, 0), in.data(), s.fan_in);
                           }
                       },
                       [&](const ReLU&) {
                           for (std::size_t j = 0; j < in.size(); ++j) out[j] = in[j] > 0.0 ? in[j] : 0.0;
                       },
                       [&](const MaxPool& m) {
                           auto& idx = ws.argmax[i];
                           idx.assign(os.size(), 0);
                           for (std::size_t c = 0; c < os.channels; ++c) {
                               for (std::size_t oy = 0; oy < os.height; ++oy) {
                                   for (std::size_t ox = 0; ox < os.width; ++ox) {
                                       std::size_t best = (c * in_shape.height + oy * m.stride) * in_shape.width + ox * m.stride;
                                       for (int dy = 0; dy < m.k; ++dy) {
                                           for (int dx = 0; dx < m.k; ++dx) {
                                               const std::size_t j = (c * in_shape.height + oy * m.stride + dy) * in_shape.width +
                                                                     ox * m.stride + dx;
                                               if (in[j] > in[best]) best = j;
                                           }
                                       }
                                       const std::size_t o = (c * os.height + oy) * os.width + ox;
                                       out[o] = in[best];
                                       idx[o] = best;
                                   }
                               }
                           }
                       },
                       [&](const GlobalAvgPool&) {
                           const std::size_t hw = in_shape.height * in_shape.width;
                           for (std::size_t c = 0; c < in_shape.channels; ++c) {
                               double sum = 0.0;
                               for (std::size_t j = 0; j < hw; ++j) sum += in[c * hw + j];
                               out[c] = sum / static_cast<double>(hw);
                           }
                       },
                       [&](const SoftmaxHead&) {
                           const ParamSlice& s = params_.layout[slice_of_layer_[i]];
                           for (std::size_t u = 0; u < s.out_units; ++u) {
                               out[u] = w[s.bias_index(u)] + dot(w + s.weight_index(u, 0), in.data(), s.fan_in);
                           }
                       }},
                   layers_[i]);
        if (!all_finite(out)) {
            throw std::runtime_error("network: non-finite value after layer " + std::to_string(i) + " (" +
                                     layer_name(layers_[i]) + ")");
        }
        in_shape = os;
    }
    ws.probs.resize(shapes_.back().size());
    softmax(ws.outs.back(), ws.probs);
}

void Network::backward_one(Workspace& ws, std::span<const double> dlogits, std::span<double> grad) const {
    const double* w = params_.values.data();
    ws.dcur.assign(dlogits.begin(), dlogits.end());
    for (std::size_t ii = layers_.size(); ii-- > 0;) {
        const Shape3& os = shapes_[ii];
        const Shape3 in_shape = ii == 0 ? input_shape_ : shapes_[ii - 1];
        std::span<const double> in = ii == 0 ? ws.input : std::span<const double>(ws.outs[ii - 1]);
        const bool need_input_grad = ii > 0;
        ws.dprev.assign(need_input_grad ? in_shape.size() : 0, 0.0);
        const std::vector<double>& dout = ws.dcur;
        std::visit(Overloaded{
                       [&](const Conv2D& c) {
                           const ParamSlice& s = params_.layout[slice_of_layer_[ii]];
                           const ConvGeometry g = conv_geometry(c, in_shape, os);
                           const std::vector<double>& col = ws.cols[ii];
                           const std::size_t P = g.positions();
                           const std::size_t K = g.patch();
                           ws.colT.resize(K * P);
                           for (std::size_t k = 0; k < K; ++k)
                               for (std::size_t p = 0; p < P; ++p) ws.colT[p * K + k] = col[k * P + p];
                           gemm_acc(g.out_c, K, P, dout.data(), P, 1, ws.colT.data(), K, grad.data() + s.offset, s.fan_in);
                           for (std::size_t oc = 0; oc < g.out_c; ++oc) {
                               const double* d = dout.data() + oc * P;
                               double bsum = 0.0;
                               for (std::size_t p = 0; p < P; ++p) bsum += d[p];
                               grad[s.bias_index(oc)] += bsum;
                           }
                           if (!need_input_grad) return;
                           ws.dcol.assign(K * P, 0.0);
                           gemm_acc(K, P, g.out_c, w + s.offset, 1, s.fan_in, dout.data(), P, ws.dcol.data(), P);
                           col2im_add(ws.dcol, g, ws.dprev);
                       },
                       [&](const FullyConnected&) {
                           const ParamSlice& s = params_.layout[slice_of_layer_[ii]];
                           for (std::size_t u = 0; u < s.out_units; ++u) {
                               const double d = dout[u];
                               double* gw = grad.data() + s.weight_index(u, 0);
                               for (std::size_t j = 0; j < s.fan_in; ++j) gw[j] += d * in[j];
                               grad[s.bias_index(u)] += d;
                               if (need_input_grad) {
                                   const double* wrow = w + s.weight_index(u, 0);
                                   for (std::size_t j = 0; j < s.fan_in; ++j) ws.dprev[j] += d * wrow[j];
                               }
                           }
                       },
                       [&](const ReLU&) {
                           for (std::size_t j = 0; j < ws.dprev.size(); ++j) ws.dprev[j] = in[j] > 0.0 ? dout[j] : 0.0;
                       },
                       [&](const MaxPool&) {
                           const auto& idx = ws.argmax[ii];
                           for (std::size_t o = 0; o < idx.size(); ++o) ws.dprev[idx[o]] += dout[o];
                       },
                       [&](const GlobalAvgPool&) {
                           const std::size_t hw = in_shape.height * in_shape.width;
                           const double scale = 1.0 / static_cast<double>(hw);
                           for (std::size_t c = 0; c < in_shape.channels; ++c) {
                               const double d = dout[c] * scale;
                               for (std::size_t j = 0; j < hw; ++j) ws.dprev[c * hw + j] = d;
                           }
                       },
                       [&](const SoftmaxHead&) {
                           // dout is the gradient with respect to the logits.
                           const ParamSlice& s = params_.layout[slice_of_layer_[ii]];
                           for (std::size_t u = 0; u < s.out_units; ++u) {
                               const double d = dout[u];
                               double* gw = grad.data() + s.weight_index(u, 0);
                               for (std::size_t j = 0; j < s.fan_in; ++j) gw[j] += d * in[j];
                               grad[s.bias_index(u)] += d;
                               if (need_input_grad) {
                                   const double* wrow = w + s.weight_index(u, 0);
                                   for (std::size_t j = 0; j < s.fan_in; ++j) ws.dprev[j] += d * wrow[j];
                               }
                           }
                       }},
                   layers_[ii]);
        std::swap(ws.dcur, ws.dprev);
    }
}

namespace {

void check_batch(const Tensor& batch, const Shape3& in) {
    if (batch.rank() != 4 || batch.dim(1) != in.channels || batch.dim(2) != in.height || batch.dim(3) != in.width) {
        std::string got;
        for (std::size_t d : batch.shape()) got += (got.empty() ? "" : "x") + std::to_string(d);
        throw std::invalid_argument("network: batch shape " + got + " does not match input " +
                                    std::to_string(in.channels) + "x" + std::to_string(in.height) + "x" +
                                    std::to_string(in.width));
    }
}

}  // namespace

ForwardResult Network::forward(const Tensor& batch) const {
    check_batch(batch, input_shape_);
    const std::size_t B = batch.dim(0);
    ForwardResult result;
    result.activations.reserve(layers_.size());
    for (const Shape3& s : shapes_) result.activations.emplace_back(std::vector<std::size_t>{B, s.channels, s.height, s.width});
    const auto K = static_cast<std::size_t>(num_classes());
    result.probs = Tensor({B, K});
    Workspace ws;
    for (std::size_t b = 0; b < B; ++b) {
        forward_one(batch.sample(b), ws);
        for (std::size_t i = 0; i < layers_.size(); ++i) {
            std::copy(ws.outs[i].begin(), ws.outs[i].end(), result.activations[i].sample(b).begin());
        }
        std::copy(ws.probs.begin(), ws.probs.end(), result.probs.sample(b).begin());
    }
    return result;
}

Tensor Network::predict(const Tensor& batch) const {
    check_batch(batch, input_shape_);
    const std::size_t B = batch.dim(0);
    Tensor probs({B, static_cast<std::size_t>(num_classes())});
    Workspace ws;
    for (std::size_t b = 0; b < B; ++b) {
        forward_one(batch.sample(b), ws);
        std::copy(ws.probs.begin(), ws.probs.end(), probs.sample(b).begin());
    }
    return probs;
}

LossGrad Network::loss_and_grad(const Tensor& batch, std::span<const int> labels) const {
    check_batch(batch, input_shape_);
    const std::size_t B = batch.dim(0);
    if (labels.size() != B) throw std::invalid_argument("network: label count does not match batch size");
    if (B == 0) throw std::invalid_argument("network: empty batch");
    const int K = num_classes();
    for (int y : labels) {
        if (y < 0 || y >= K) throw std::out_of_range("network: label " + std::to_string(y) + " out of range");
    }
    LossGrad out;
    out.grad.assign(params_.size(), 0.0);
    Workspace ws;
    std::vector<double> dlogits(static_cast<std::size_t>(K));
    double loss = 0.0;
    for (std::size_t b = 0; b < B; ++b) {
        forward_one(batch.sample(b), ws);
        const std::vector<double>& logits = ws.outs.back();
        const double zmax = *std::max_element(logits.begin(), logits.end());
        double sum = 0.0;
        for (double z : logits) sum += std::exp(z - zmax);
        const auto y = static_cast<std::size_t>(labels[b]);
        loss += zmax + std::log(sum) - logits[y];
        for (std::size_t k = 0; k < dlogits.size(); ++k) dlogits[k] = ws.probs[k] - (k == y ? 1.0 : 0.0);
        backward_one(ws, dlogits, out.grad);
    }
    const double inv = 1.0 / static_cast<double>(B);
    out.loss = loss * inv;
    for (double& g : out.grad) g *= inv;
    return out;
}

std::vector<double> Network::per_class_logprob_grad(const Tensor& x, int k) const {
    if (x.size() != input_shape_.size()) throw std::invalid_argument("network: single example has wrong size");
    const int K = num_classes();
    if (k < 0 || k >= K) throw std::out_of_range("network: class " + std::to_string(k) + " out of range");
    Workspace ws;
    forward_one(x.data(), ws);
    if (ws.probs[static_cast<std::size_t>(k)] == 0.0) {
        throw std::domain_error("network: f_k(x) is exactly zero, log-probability undefined");
    }
    std::vector<double> dlogits(static_cast<std::size_t>(K));
    for (std::size_t j = 0; j < dlogits.size(); ++j) dlogits[j] = (j == static_cast<std::size_t>(k) ? 1.0 : 0.0) - ws.probs[j];
    std::vector<double> grad(params_.size(), 0.0);
    backward_one(ws, dlogits, grad);
    return grad;
}

void Network::visit_class_logprob_grads(
    std::span<const double> x, const std::function<void(int, double, std::span<const double>)>& visitor) const {
    if (x.size() != input_shape_.size()) throw std::invalid_argument("network: single example has wrong size");
    Workspace ws;
    forward_one(x, ws);
    const std::vector<double> probs = ws.probs;
    std::vector<double> dlogits(probs.size());
    std::vector<double> grad(params_.size());
    for (std::size_t k = 0; k < probs.size(); ++k) {
        if (std::isnan(probs[k])) throw std::runtime_error("network: class probability is NaN");
        if (probs[k] == 0.0) continue;
        for (std::size_t j = 0; j < probs.size(); ++j) dlogits[j] = (j == k ? 1.0 : 0.0) - probs[j];
        std::fill(grad.begin(), grad.end(), 0.0);
        backward_one(ws, dlogits, grad);
        visitor(static_cast<int>(k), probs[k], grad);
    }
}

Network Network::replace_head(int num_classes, std::uint64_t seed) const {
    if (num_classes < 2) throw std::invalid_argument("replace_head: num_classes must be at least 2");
    std::vector<LayerSpec> specs = layers_;
    specs.back() = SoftmaxHead{num_classes};
    Network out(input_shape_, specs);
    const ParamSlice& head = out.head_slice();
    std::copy(params_.values.begin(), params_.values.begin() + static_cast<std::ptrdiff_t>(head.offset),
              out.params_.values.begin());
    std::mt19937_64 rng(seed);
    const double a = std::sqrt(6.0 / static_cast<double>(head.fan_in + head.out_units));
    std::uniform_real_distribution<double> dist(-a, a);
    for (std::size_t j = 0; j < head.out_units * head.fan_in; ++j) out.params_.values[head.offset + j] = dist(rng);
    return out;
}

Network make_desknet(Shape3 input_shape, int num_classes) {
    return Network(input_shape, {Conv2D{16, 3, 3, 1, 1}, ReLU{}, MaxPool{2, 2}, Conv2D{32, 3, 3, 1, 1}, ReLU{},
                                 MaxPool{2, 2}, GlobalAvgPool{}, SoftmaxHead{num_classes}});
}

bool Tensor::all_finite() const noexcept {
    return std::all_of(data_.begin(), data_.end(), [](double x) { return std::isfinite(x); });
}

}  // namespace spft
