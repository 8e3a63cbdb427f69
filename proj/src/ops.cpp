#include "jssu/ops.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>

namespace jssu {

namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const RowMat<T>>;

template <typename T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
    if (a.shape() != b.shape())
        throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                             shape_str(b.shape()));
}

template <typename T>
void require_image(const Tensor<T>& x, const char* op) {
    if (x.ndim() != 3)
        throw DimensionError(std::string(op) + ": expected [H,W,C] image, got " + shape_str(x.shape()));
}

template <typename T>
Node<T>* input_needing_grad(Node<T>& self, std::size_t i) {
    Node<T>* n = self.inputs[i].get();
    return n->requires_grad ? n : nullptr;
}

template <typename T>
Tensor<T> elementwise_binary(const Tensor<T>& a, const Tensor<T>& b, const char* op, int kind) {
    require_same_shape(a, b, op);
    const auto av = a.data();
    const auto bv = b.data();
    std::vector<T> out(av.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        switch (kind) {
            case 0: out[i] = av[i] + bv[i]; break;
            case 1: out[i] = av[i] - bv[i]; break;
            default: out[i] = av[i] * bv[i]; break;
        }
    }
    return make_result<T>(a.shape(), std::move(out), {a, b}, op, [kind](Node<T>& self) {
        const auto& g = self.grad;
        Node<T>* na = self.inputs[0].get();
        Node<T>* nb = self.inputs[1].get();
        if (na->requires_grad) {
            auto& ga = na->grad_buffer();
            if (kind == 2) {
                for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * nb->value[i];
            } else {
                for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
            }
        }
        if (nb->requires_grad) {
            auto& gb = nb->grad_buffer();
            if (kind == 0) {
                for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
            } else if (kind == 1) {
                for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
            } else {
                for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * na->value[i];
            }
        }
    });
}

struct ConvGeom {
    int height, width, channels;  // the (larger) convolution input
    int k, stride, pad;
    int out_h, out_w;
    int row_len() const { return k * k * channels; }
    int rows() const { return out_h * out_w; }
};

template <typename T>
void im2col(const T* x, const ConvGeom& g, T* cols) {
    const int row_len = g.row_len();
    for (int oy = 0; oy < g.out_h; ++oy) {
        for (int ox = 0; ox < g.out_w; ++ox) {
            T* row = cols + static_cast<std::size_t>(oy * g.out_w + ox) * row_len;
            for (int ky = 0; ky < g.k; ++ky) {
                const int iy = oy * g.stride - g.pad + ky;
                for (int kx = 0; kx < g.k; ++kx) {
                    const int ix = ox * g.stride - g.pad + kx;
                    T* dst = row + (ky * g.k + kx) * g.channels;
                    if (iy < 0 || iy >= g.height || ix < 0 || ix >= g.width) {
                        std::fill(dst, dst + g.channels, T(0));
                    } else {
                        const T* src = x + (static_cast<std::size_t>(iy) * g.width + ix) * g.channels;
                        std::copy(src, src + g.channels, dst);
                    }
                }
            }
        }
    }
}

template <typename T>
void col2im_accumulate(const T* cols, const ConvGeom& g, T* x) {
    const int row_len = g.row_len();
    for (int oy = 0; oy < g.out_h; ++oy) {
        for (int ox = 0; ox < g.out_w; ++ox) {
            const T* row = cols + static_cast<std::size_t>(oy * g.out_w + ox) * row_len;
            for (int ky = 0; ky < g.k; ++ky) {
                const int iy = oy * g.stride - g.pad + ky;
                if (iy < 0 || iy >= g.height) continue;
                for (int kx = 0; kx < g.k; ++kx) {
                    const int ix = ox * g.stride - g.pad + kx;
                    if (ix < 0 || ix >= g.width) continue;
                    const T* src = row + (ky * g.k + kx) * g.channels;
                    T* dst = x + (static_cast<std::size_t>(iy) * g.width + ix) * g.channels;
                    for (int c = 0; c < g.channels; ++c) dst[c] += src[c];
                }
            }
        }
    }
}

bool is_pointwise(const ConvGeom& g) { return g.k == 1 && g.stride == 1 && g.pad == 0; }

template <typename T>
void check_kernel(const Tensor<T>& kernel, const char* op) {
    if (kernel.ndim() != 4 || kernel.dim(0) != kernel.dim(1))
        throw DimensionError(std::string(op) + ": kernel must be [k,k,Cin,Cout], got " +
                             shape_str(kernel.shape()));
    if (kernel.dim(0) % 2 == 0)
        throw DimensionError(std::string(op) + ": kernel size must be odd");
}

// Keys cubic convolution kernel with a = -0.5.
double keys_cubic(double t) {
    constexpr double a = -0.5;
    t = std::abs(t);
    if (t <= 1.0) return ((a + 2.0) * t - (a + 3.0)) * t * t + 1.0;
    if (t < 2.0) return ((a * t - 5.0 * a) * t + 8.0 * a) * t - 4.0 * a;
    return 0.0;
}

struct CubicTaps {
    std::vector<int> index;      // out * 4
    std::vector<double> weight;  // out * 4
};

CubicTaps cubic_taps(int in, int out) {
    CubicTaps taps;
    taps.index.resize(static_cast<std::size_t>(out) * 4);
    taps.weight.resize(static_cast<std::size_t>(out) * 4);
    const double ratio = static_cast<double>(in) / out;
    for (int o = 0; o < out; ++o) {
        const double src = (o + 0.5) * ratio - 0.5;
        const double base = std::floor(src);
        const double t = src - base;
        const int i0 = static_cast<int>(base);
        const double w[4] = {keys_cubic(t + 1.0), keys_cubic(t), keys_cubic(1.0 - t), keys_cubic(2.0 - t)};
        for (int j = 0; j < 4; ++j) {
            taps.index[o * 4 + j] = std::clamp(i0 - 1 + j, 0, in - 1);
            taps.weight[o * 4 + j] = w[j];
        }
    }
    return taps;
}

template <typename T>
struct Selection {
    int topk = 0;
    std::vector<int> count;
    std::vector<int> index;
    std::vector<T> weight;
};

template <typename T>
Selection<T> select_topk(const T* q, const T* k, int height, int width, int dim, int window, int topk) {
    if (window < 1 || window % 2 == 0) throw DimensionError("attention window must be odd and positive");
    if (topk < 1) throw DimensionError("attention top-k must be positive");
    const int r = window / 2;
    const T inv = T(1) / std::sqrt(static_cast<T>(dim));
    const int n = height * width;
    Selection<T> sel;
    sel.topk = topk;
    sel.count.assign(n, 0);
    sel.index.assign(static_cast<std::size_t>(n) * topk, -1);
    sel.weight.assign(static_cast<std::size_t>(n) * topk, T(0));
    std::vector<std::pair<T, int>> cand;
    cand.reserve(static_cast<std::size_t>(window) * window);
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            const int j = y * width + x;
            const T* qj = q + static_cast<std::size_t>(j) * dim;
            cand.clear();
            for (int ny = std::max(0, y - r); ny <= std::min(height - 1, y + r); ++ny) {
                for (int nx = std::max(0, x - r); nx <= std::min(width - 1, x + r); ++nx) {
                    const int l = ny * width + nx;
                    const T* kl = k + static_cast<std::size_t>(l) * dim;
                    T s = 0;
                    for (int d = 0; d < dim; ++d) s += qj[d] * kl[d];
                    cand.emplace_back(s * inv, l);
                }
            }
            const int kept = std::min<int>(topk, static_cast<int>(cand.size()));
            std::partial_sort(cand.begin(), cand.begin() + kept, cand.end(), [](const auto& a, const auto& b) {
                return a.first > b.first || (a.first == b.first && a.second < b.second);
            });
            const T top = cand[0].first;
            T z = 0;
            for (int i = 0; i < kept; ++i) z += std::exp(cand[i].first - top);
            sel.count[j] = kept;
            for (int i = 0; i < kept; ++i) {
                sel.index[static_cast<std::size_t>(j) * topk + i] = cand[i].second;
                sel.weight[static_cast<std::size_t>(j) * topk + i] = std::exp(cand[i].first - top) / z;
            }
        }
    }
    return sel;
}

}  // namespace

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
    return elementwise_binary(a, b, "add", 0);
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
    return elementwise_binary(a, b, "sub", 1);
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
    return elementwise_binary(a, b, "mul", 2);
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T s) {
    std::vector<T> out(a.data().begin(), a.data().end());
    for (auto& v : out) v *= s;
    return make_result<T>(a.shape(), std::move(out), {a}, "scale", [s](Node<T>& self) {
        auto& ga = self.inputs[0]->grad_buffer();
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += s * self.grad[i];
    });
}

template <typename T>
Tensor<T> scale_by(const Tensor<T>& a, const Tensor<T>& s) {
    if (s.size() != 1) throw DimensionError("scale_by: factor must have a single element");
    const T f = s[0];
    std::vector<T> out(a.data().begin(), a.data().end());
    for (auto& v : out) v *= f;
    return make_result<T>(a.shape(), std::move(out), {a, s}, "scale_by", [](Node<T>& self) {
        Node<T>* na = self.inputs[0].get();
        Node<T>* ns = self.inputs[1].get();
        if (na->requires_grad) {
            auto& ga = na->grad_buffer();
            const T f = ns->value[0];
            for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += f * self.grad[i];
        }
        if (ns->requires_grad) {
            T acc = 0;
            for (std::size_t i = 0; i < self.grad.size(); ++i) acc += self.grad[i] * na->value[i];
            ns->grad_buffer()[0] += acc;
        }
    });
}

template <typename T>
Tensor<T> relu(const Tensor<T>& a) {
    std::vector<T> out(a.data().begin(), a.data().end());
    for (auto& v : out) v = v > T(0) ? v : T(0);
    return make_result<T>(a.shape(), std::move(out), {a}, "relu", [](Node<T>& self) {
        Node<T>* na = self.inputs[0].get();
        auto& ga = na->grad_buffer();
        for (std::size_t i = 0; i < ga.size(); ++i)
            if (na->value[i] > T(0)) ga[i] += self.grad[i];
    });
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& a) {
    std::vector<T> out(a.size());
    const auto av = a.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = T(1) / (T(1) + std::exp(-av[i]));
    return make_result<T>(a.shape(), std::move(out), {a}, "sigmoid", [](Node<T>& self) {
        auto& ga = self.inputs[0]->grad_buffer();
        for (std::size_t i = 0; i < ga.size(); ++i) {
            const T y = self.value[i];
            ga[i] += self.grad[i] * y * (T(1) - y);
        }
    });
}

template <typename T>
Tensor<T> sum(const Tensor<T>& a) {
    T acc = 0;
    for (T v : a.data()) acc += v;
    return make_result<T>(Shape{1}, {acc}, {a}, "sum", [](Node<T>& self) {
        auto& ga = self.inputs[0]->grad_buffer();
        for (auto& g : ga) g += self.grad[0];
    });
}

template <typename T>
Tensor<T> half_squared_norm(const Tensor<T>& a) {
    T acc = 0;
    for (T v : a.data()) acc += v * v;
    return make_result<T>(Shape{1}, {T(0.5) * acc}, {a}, "half_squared_norm", [](Node<T>& self) {
        Node<T>* na = self.inputs[0].get();
        auto& ga = na->grad_buffer();
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += self.grad[0] * na->value[i];
    });
}

template <typename T>
Tensor<T> mean_abs_diff(const Tensor<T>& a, const Tensor<T>& b) {
    require_same_shape(a, b, "mean_abs_diff");
    const auto av = a.data();
    const auto bv = b.data();
    T acc = 0;
    for (std::size_t i = 0; i < av.size(); ++i) acc += std::abs(av[i] - bv[i]);
    const T n = static_cast<T>(av.size());
    return make_result<T>(Shape{1}, {acc / n}, {a, b}, "mean_abs_diff", [n](Node<T>& self) {
        Node<T>* na = self.inputs[0].get();
        Node<T>* nb = self.inputs[1].get();
        const T g = self.grad[0] / n;
        for (std::size_t i = 0; i < na->value.size(); ++i) {
            const T d = na->value[i] - nb->value[i];
            const T s = d > T(0) ? g : (d < T(0) ? -g : T(0));
            if (na->requires_grad) na->grad_buffer()[i] += s;
            if (nb->requires_grad) nb->grad_buffer()[i] -= s;
        }
    });
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& a, Shape shape) {
    if (numel(shape) != a.size())
        throw DimensionError("reshape: " + shape_str(a.shape()) + " -> " + shape_str(shape));
    std::vector<T> out(a.data().begin(), a.data().end());
    return make_result<T>(std::move(shape), std::move(out), {a}, "reshape", [](Node<T>& self) {
        auto& ga = self.inputs[0]->grad_buffer();
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += self.grad[i];
    });
}

template <typename T>
Tensor<T> concat_channels(const std::vector<Tensor<T>>& parts) {
    if (parts.empty()) throw DimensionError("concat_channels: no inputs");
    Shape base = parts[0].shape();
    std::vector<int> widths;
    int total = 0;
    for (const auto& p : parts) {
        Shape s = p.shape();
        if (s.size() != base.size() || !std::equal(s.begin(), s.end() - 1, base.begin()))
            throw DimensionError("concat_channels: incompatible shapes " + shape_str(base) + " vs " +
                                 shape_str(s));
        widths.push_back(s.back());
        total += s.back();
    }
    const std::size_t rows = parts[0].size() / widths[0];
    std::vector<T> out(rows * total);
    int offset = 0;
    for (std::size_t p = 0; p < parts.size(); ++p) {
        const auto src = parts[p].data();
        const int w = widths[p];
        for (std::size_t r = 0; r < rows; ++r)
            std::copy(src.begin() + r * w, src.begin() + (r + 1) * w, out.begin() + r * total + offset);
        offset += w;
    }
    Shape shape = base;
    shape.back() = total;
    return make_result<T>(std::move(shape), std::move(out), parts, "concat_channels",
                          [widths, rows, total](Node<T>& self) {
                              int offset = 0;
                              for (std::size_t p = 0; p < widths.size(); ++p) {
                                  const int w = widths[p];
                                  if (Node<T>* n = input_needing_grad(self, p)) {
                                      auto& g = n->grad_buffer();
                                      for (std::size_t r = 0; r < rows; ++r)
                                          for (int c = 0; c < w; ++c)
                                              g[r * w + c] += self.grad[r * total + offset + c];
                                  }
                                  offset += w;
                              }
                          });
}

template <typename T>
Tensor<T> bias_add(const Tensor<T>& x, const Tensor<T>& bias) {
    const int c = x.shape().back();
    if (bias.ndim() != 1 || bias.dim(0) != c)
        throw DimensionError("bias_add: bias " + shape_str(bias.shape()) + " for input " + shape_str(x.shape()));
    std::vector<T> out(x.data().begin(), x.data().end());
    const auto b = bias.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += b[i % c];
    return make_result<T>(x.shape(), std::move(out), {x, bias}, "bias_add", [c](Node<T>& self) {
        if (Node<T>* nx = input_needing_grad(self, 0)) {
            auto& g = nx->grad_buffer();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
        }
        if (Node<T>* nb = input_needing_grad(self, 1)) {
            auto& g = nb->grad_buffer();
            for (std::size_t i = 0; i < self.grad.size(); ++i) g[i % c] += self.grad[i];
        }
    });
}

template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& kernel, const Tensor<T>& bias, int stride, int pad) {
    require_image(input, "conv2d");
    check_kernel(kernel, "conv2d");
    if (stride < 1 || pad < 0) throw DimensionError("conv2d: stride must be positive and pad non-negative");
    const int k = kernel.dim(0);
    const int cin = input.dim(2);
    const int cout = kernel.dim(3);
    if (kernel.dim(2) != cin)
        throw DimensionError("conv2d: input has " + std::to_string(cin) + " channels, kernel expects " +
                             std::to_string(kernel.dim(2)));
    if (input.dim(0) + 2 * pad < k || input.dim(1) + 2 * pad < k)
        throw DimensionError("conv2d: padded input smaller than kernel");
    if (bias.defined() && (bias.ndim() != 1 || bias.dim(0) != cout))
        throw DimensionError("conv2d: bias must be [Cout]");

    ConvGeom g{input.dim(0), input.dim(1), cin, k, stride, pad, 0, 0};
    g.out_h = (g.height + 2 * pad - k) / stride + 1;
    g.out_w = (g.width + 2 * pad - k) / stride + 1;

    std::shared_ptr<std::vector<T>> cols;
    if (!is_pointwise(g)) {
        cols = std::make_shared<std::vector<T>>(static_cast<std::size_t>(g.rows()) * g.row_len());
        im2col(input.data().data(), g, cols->data());
    }
    const T* col_ptr = cols ? cols->data() : input.data().data();

    std::vector<T> out(static_cast<std::size_t>(g.rows()) * cout);
    {
        ConstMatMap<T> c(col_ptr, g.rows(), g.row_len());
        ConstMatMap<T> w(kernel.data().data(), g.row_len(), cout);
        MatMap<T> o(out.data(), g.rows(), cout);
        o.noalias() = c * w;
        if (bias.defined()) {
            const auto b = bias.data();
            for (int r = 0; r < g.rows(); ++r)
                for (int j = 0; j < cout; ++j) o(r, j) += b[j];
        }
    }

    std::vector<Tensor<T>> inputs{input, kernel};
    if (bias.defined()) inputs.push_back(bias);
    return make_result<T>(Shape{g.out_h, g.out_w, cout}, std::move(out), std::move(inputs), "conv2d",
                          [g, cout, cols](Node<T>& self) {
                              Node<T>* nx = self.inputs[0].get();
                              Node<T>* nk = self.inputs[1].get();
                              ConstMatMap<T> dy(self.grad.data(), g.rows(), cout);
                              const T* col_ptr = cols ? cols->data() : nx->value.data();
                              if (nk->requires_grad) {
                                  ConstMatMap<T> c(col_ptr, g.rows(), g.row_len());
                                  MatMap<T> dw(nk->grad_buffer().data(), g.row_len(), cout);
                                  dw.noalias() += c.transpose() * dy;
                              }
                              if (self.inputs.size() > 2 && self.inputs[2]->requires_grad) {
                                  auto& db = self.inputs[2]->grad_buffer();
                                  for (int r = 0; r < g.rows(); ++r)
                                      for (int j = 0; j < cout; ++j) db[j] += dy(r, j);
                              }
                              if (nx->requires_grad) {
                                  ConstMatMap<T> w(nk->value.data(), g.row_len(), cout);
                                  if (is_pointwise(g)) {
                                      MatMap<T> dx(nx->grad_buffer().data(), g.rows(), g.row_len());
                                      dx.noalias() += dy * w.transpose();
                                  } else {
                                      RowMat<T> dcols = dy * w.transpose();
                                      col2im_accumulate(dcols.data(), g, nx->grad_buffer().data());
                                  }
                              }
                          });
}

template <typename T>
Tensor<T> conv_transpose2d(const Tensor<T>& input, const Tensor<T>& kernel, int stride) {
    require_image(input, "conv_transpose2d");
    check_kernel(kernel, "conv_transpose2d");
    if (stride < 1) throw DimensionError("conv_transpose2d: stride must be positive");
    const int k = kernel.dim(0);
    const int cout_fwd = kernel.dim(3);
    if (input.dim(2) != cout_fwd)
        throw DimensionError("conv_transpose2d: input has " + std::to_string(input.dim(2)) +
                             " channels, kernel provides " + std::to_string(cout_fwd));
    ConvGeom g{input.dim(0) * stride, input.dim(1) * stride, kernel.dim(2), k, stride, k / 2, input.dim(0),
               input.dim(1)};

    std::vector<T> out(static_cast<std::size_t>(g.height) * g.width * g.channels, T(0));
    {
        ConstMatMap<T> x(input.data().data(), g.rows(), cout_fwd);
        ConstMatMap<T> w(kernel.data().data(), g.row_len(), cout_fwd);
        RowMat<T> cols = x * w.transpose();
        col2im_accumulate(cols.data(), g, out.data());
    }
    return make_result<T>(Shape{g.height, g.width, g.channels}, std::move(out), {input, kernel},
                          "conv_transpose2d", [g, cout_fwd](Node<T>& self) {
                              Node<T>* nx = self.inputs[0].get();
                              Node<T>* nk = self.inputs[1].get();
                              RowMat<T> cols(g.rows(), g.row_len());
                              im2col(self.grad.data(), g, cols.data());
                              if (nx->requires_grad) {
                                  ConstMatMap<T> w(nk->value.data(), g.row_len(), cout_fwd);
                                  MatMap<T> dx(nx->grad_buffer().data(), g.rows(), cout_fwd);
                                  dx.noalias() += cols * w;
                              }
                              if (nk->requires_grad) {
                                  ConstMatMap<T> x(nx->value.data(), g.rows(), cout_fwd);
                                  MatMap<T> dw(nk->grad_buffer().data(), g.row_len(), cout_fwd);
                                  dw.noalias() += cols.transpose() * x;
                              }
                          });
}

template <typename T>
Tensor<T> bicubic_resize(const Tensor<T>& input, int out_h, int out_w) {
    require_image(input, "bicubic_resize");
    if (out_h < 1 || out_w < 1) throw DimensionError("bicubic_resize: output size must be positive");
    const int h = input.dim(0);
    const int w = input.dim(1);
    const int c = input.dim(2);
    auto ty = std::make_shared<CubicTaps>(cubic_taps(h, out_h));
    auto tx = std::make_shared<CubicTaps>(cubic_taps(w, out_w));

    const auto x = input.data();
    std::vector<T> tmp(static_cast<std::size_t>(out_h) * w * c, T(0));
    for (int oy = 0; oy < out_h; ++oy)
        for (int j = 0; j < 4; ++j) {
            const T wt = static_cast<T>(ty->weight[oy * 4 + j]);
            const T* src = x.data() + static_cast<std::size_t>(ty->index[oy * 4 + j]) * w * c;
            T* dst = tmp.data() + static_cast<std::size_t>(oy) * w * c;
            for (int i = 0; i < w * c; ++i) dst[i] += wt * src[i];
        }
    std::vector<T> out(static_cast<std::size_t>(out_h) * out_w * c, T(0));
    for (int oy = 0; oy < out_h; ++oy)
        for (int ox = 0; ox < out_w; ++ox) {
            T* dst = out.data() + (static_cast<std::size_t>(oy) * out_w + ox) * c;
            for (int j = 0; j < 4; ++j) {
                const T wt = static_cast<T>(tx->weight[ox * 4 + j]);
                const T* src = tmp.data() + (static_cast<std::size_t>(oy) * w + tx->index[ox * 4 + j]) * c;
                for (int ch = 0; ch < c; ++ch) dst[ch] += wt * src[ch];
            }
        }
    return make_result<T>(Shape{out_h, out_w, c}, std::move(out), {input}, "bicubic_resize",
                          [ty, tx, h, w, c, out_h, out_w](Node<T>& self) {
                              std::vector<T> gtmp(static_cast<std::size_t>(out_h) * w * c, T(0));
                              for (int oy = 0; oy < out_h; ++oy)
                                  for (int ox = 0; ox < out_w; ++ox) {
                                      const T* g = self.grad.data() + (static_cast<std::size_t>(oy) * out_w + ox) * c;
                                      for (int j = 0; j < 4; ++j) {
                                          const T wt = static_cast<T>(tx->weight[ox * 4 + j]);
                                          T* dst = gtmp.data() +
                                                   (static_cast<std::size_t>(oy) * w + tx->index[ox * 4 + j]) * c;
                                          for (int ch = 0; ch < c; ++ch) dst[ch] += wt * g[ch];
                                      }
                                  }
                              auto& gx = self.inputs[0]->grad_buffer();
                              for (int oy = 0; oy < out_h; ++oy)
                                  for (int j = 0; j < 4; ++j) {
                                      const T wt = static_cast<T>(ty->weight[oy * 4 + j]);
                                      const T* src = gtmp.data() + static_cast<std::size_t>(oy) * w * c;
                                      T* dst = gx.data() + static_cast<std::size_t>(ty->index[oy * 4 + j]) * w * c;
                                      for (int i = 0; i < w * c; ++i) dst[i] += wt * src[i];
                                  }
                              (void)h;
                          });
}

template <typename T>
Tensor<T> bicubic_resize(const Tensor<T>& input, double scale) {
    require_image(input, "bicubic_resize");
    if (!(scale > 0.0)) throw DimensionError("bicubic_resize: scale must be positive");
    const int oh = std::max(1, static_cast<int>(std::lround(input.dim(0) * scale)));
    const int ow = std::max(1, static_cast<int>(std::lround(input.dim(1) * scale)));
    return bicubic_resize(input, oh, ow);
}

template <typename T>
Tensor<T> softmax(const Tensor<T>& input, int axis) {
    const int nd = input.ndim();
    if (axis < 0) axis += nd;
    if (axis < 0 || axis >= nd) throw DimensionError("softmax: axis out of range");
    std::size_t outer = 1, inner = 1;
    for (int i = 0; i < axis; ++i) outer *= input.dim(i);
    for (int i = axis + 1; i < nd; ++i) inner *= input.dim(i);
    const int n = input.dim(axis);
    const auto x = input.data();
    std::vector<T> out(x.size());
    for (std::size_t o = 0; o < outer; ++o)
        for (std::size_t in = 0; in < inner; ++in) {
            const std::size_t base = o * n * inner + in;
            T top = x[base];
            for (int i = 1; i < n; ++i) top = std::max(top, x[base + i * inner]);
            T z = 0;
            for (int i = 0; i < n; ++i) {
                const T e = std::exp(x[base + i * inner] - top);
                out[base + i * inner] = e;
                z += e;
            }
            for (int i = 0; i < n; ++i) out[base + i * inner] /= z;
        }
    return make_result<T>(input.shape(), std::move(out), {input}, "softmax", [outer, inner, n](Node<T>& self) {
        auto& gx = self.inputs[0]->grad_buffer();
        for (std::size_t o = 0; o < outer; ++o)
            for (std::size_t in = 0; in < inner; ++in) {
                const std::size_t base = o * n * inner + in;
                T dot = 0;
                for (int i = 0; i < n; ++i) dot += self.value[base + i * inner] * self.grad[base + i * inner];
                for (int i = 0; i < n; ++i) {
                    const std::size_t idx = base + i * inner;
                    gx[idx] += self.value[idx] * (self.grad[idx] - dot);
                }
            }
    });
}

template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b) {
    if (x.ndim() != 2 || w.ndim() != 2 || x.dim(1) != w.dim(0))
        throw DimensionError("linear: cannot apply " + shape_str(w.shape()) + " to " + shape_str(x.shape()));
    const int rows = x.dim(0);
    const int din = w.dim(0);
    const int dout = w.dim(1);
    if (b.defined() && (b.ndim() != 1 || b.dim(0) != dout)) throw DimensionError("linear: bias must be [dout]");
    std::vector<T> out(static_cast<std::size_t>(rows) * dout);
    {
        ConstMatMap<T> xm(x.data().data(), rows, din);
        ConstMatMap<T> wm(w.data().data(), din, dout);
        MatMap<T> o(out.data(), rows, dout);
        o.noalias() = xm * wm;
        if (b.defined())
            for (int r = 0; r < rows; ++r)
                for (int j = 0; j < dout; ++j) o(r, j) += b[j];
    }
    std::vector<Tensor<T>> inputs{x, w};
    if (b.defined()) inputs.push_back(b);
    return make_result<T>(Shape{rows, dout}, std::move(out), std::move(inputs), "linear",
                          [rows, din, dout](Node<T>& self) {
                              Node<T>* nx = self.inputs[0].get();
                              Node<T>* nw = self.inputs[1].get();
                              ConstMatMap<T> dy(self.grad.data(), rows, dout);
                              if (nx->requires_grad) {
                                  ConstMatMap<T> wm(nw->value.data(), din, dout);
                                  MatMap<T> dx(nx->grad_buffer().data(), rows, din);
                                  dx.noalias() += dy * wm.transpose();
                              }
                              if (nw->requires_grad) {
                                  ConstMatMap<T> xm(nx->value.data(), rows, din);
                                  MatMap<T> dw(nw->grad_buffer().data(), din, dout);
                                  dw.noalias() += xm.transpose() * dy;
                              }
                              if (self.inputs.size() > 2 && self.inputs[2]->requires_grad) {
                                  auto& db = self.inputs[2]->grad_buffer();
                                  for (int r = 0; r < rows; ++r)
                                      for (int j = 0; j < dout; ++j) db[j] += dy(r, j);
                              }
                          });
}

template <typename T>
Tensor<T> gather_rows(const Tensor<T>& x, const std::vector<int>& rows) {
    if (x.ndim() != 2) throw DimensionError("gather_rows: expected [N,d]");
    const int n = x.dim(0);
    const int d = x.dim(1);
    for (int r : rows)
        if (r < 0 || r >= n) throw DimensionError("gather_rows: row index out of range");
    if (rows.empty()) throw DimensionError("gather_rows: empty selection");
    std::vector<T> out(rows.size() * d);
    const auto src = x.data();
    for (std::size_t i = 0; i < rows.size(); ++i)
        std::copy(src.begin() + static_cast<std::size_t>(rows[i]) * d,
                  src.begin() + static_cast<std::size_t>(rows[i] + 1) * d, out.begin() + i * d);
    return make_result<T>(Shape{static_cast<int>(rows.size()), d}, std::move(out), {x}, "gather_rows",
                          [rows, d](Node<T>& self) {
                              auto& g = self.inputs[0]->grad_buffer();
                              for (std::size_t i = 0; i < rows.size(); ++i)
                                  for (int c = 0; c < d; ++c)
                                      g[static_cast<std::size_t>(rows[i]) * d + c] += self.grad[i * d + c];
                          });
}

template <typename T>
Tensor<T> scatter_rows(const std::vector<Tensor<T>>& parts, const std::vector<std::vector<int>>& rows,
                       int total_rows) {
    if (parts.size() != rows.size() || parts.empty())
        throw DimensionError("scatter_rows: parts and row lists differ in count");
    const int d = parts[0].dim(1);
    for (std::size_t p = 0; p < parts.size(); ++p) {
        if (parts[p].ndim() != 2 || parts[p].dim(1) != d ||
            parts[p].dim(0) != static_cast<int>(rows[p].size()))
            throw DimensionError("scatter_rows: part " + std::to_string(p) + " inconsistent with its row list");
        for (int r : rows[p])
            if (r < 0 || r >= total_rows) throw DimensionError("scatter_rows: row index out of range");
    }
    std::vector<T> out(static_cast<std::size_t>(total_rows) * d, T(0));
    for (std::size_t p = 0; p < parts.size(); ++p) {
        const auto src = parts[p].data();
        for (std::size_t i = 0; i < rows[p].size(); ++i)
            std::copy(src.begin() + i * d, src.begin() + (i + 1) * d,
                      out.begin() + static_cast<std::size_t>(rows[p][i]) * d);
    }
    return make_result<T>(Shape{total_rows, d}, std::move(out), parts, "scatter_rows", [rows, d](Node<T>& self) {
        for (std::size_t p = 0; p < rows.size(); ++p) {
            Node<T>* n = input_needing_grad(self, p);
            if (!n) continue;
            auto& g = n->grad_buffer();
            for (std::size_t i = 0; i < rows[p].size(); ++i)
                for (int c = 0; c < d; ++c)
                    g[i * d + c] += self.grad[static_cast<std::size_t>(rows[p][i]) * d + c];
        }
    });
}

template <typename T>
Tensor<T> channel_mean(const Tensor<T>& x) {
    require_image(x, "channel_mean");
    const int c = x.dim(2);
    const std::size_t pixels = x.size() / c;
    std::vector<T> out(c, T(0));
    const auto v = x.data();
    for (std::size_t p = 0; p < pixels; ++p)
        for (int j = 0; j < c; ++j) out[j] += v[p * c + j];
    for (auto& o : out) o /= static_cast<T>(pixels);
    return make_result<T>(Shape{c}, std::move(out), {x}, "channel_mean", [c, pixels](Node<T>& self) {
        auto& g = self.inputs[0]->grad_buffer();
        const T inv = T(1) / static_cast<T>(pixels);
        for (std::size_t p = 0; p < pixels; ++p)
            for (int j = 0; j < c; ++j) g[p * c + j] += self.grad[j] * inv;
    });
}

template <typename T>
Tensor<T> channel_scale(const Tensor<T>& x, const Tensor<T>& gate) {
    require_image(x, "channel_scale");
    const int c = x.dim(2);
    if (gate.size() != static_cast<std::size_t>(c)) throw DimensionError("channel_scale: gate must be [C]");
    std::vector<T> out(x.data().begin(), x.data().end());
    const auto gv = gate.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= gv[i % c];
    return make_result<T>(x.shape(), std::move(out), {x, gate}, "channel_scale", [c](Node<T>& self) {
        Node<T>* nx = self.inputs[0].get();
        Node<T>* ng = self.inputs[1].get();
        if (nx->requires_grad) {
            auto& g = nx->grad_buffer();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * ng->value[i % c];
        }
        if (ng->requires_grad) {
            auto& g = ng->grad_buffer();
            for (std::size_t i = 0; i < self.grad.size(); ++i) g[i % c] += self.grad[i] * nx->value[i];
        }
    });
}

template <typename T>
Tensor<T> roll(const Tensor<T>& x, int dy, int dx) {
    require_image(x, "roll");
    const int h = x.dim(0);
    const int w = x.dim(1);
    const int c = x.dim(2);
    auto wrap = [](int v, int n) { return ((v % n) + n) % n; };
    std::vector<int> dest(static_cast<std::size_t>(h) * w);
    for (int y = 0; y < h; ++y)
        for (int xx = 0; xx < w; ++xx) dest[y * w + xx] = wrap(y + dy, h) * w + wrap(xx + dx, w);
    std::vector<T> out(x.size());
    const auto v = x.data();
    for (std::size_t p = 0; p < dest.size(); ++p)
        std::copy(v.begin() + p * c, v.begin() + (p + 1) * c, out.begin() + static_cast<std::size_t>(dest[p]) * c);
    return make_result<T>(x.shape(), std::move(out), {x}, "roll", [dest, c](Node<T>& self) {
        auto& g = self.inputs[0]->grad_buffer();
        for (std::size_t p = 0; p < dest.size(); ++p)
            for (int j = 0; j < c; ++j) g[p * c + j] += self.grad[static_cast<std::size_t>(dest[p]) * c + j];
    });
}

template <typename T>
Tensor<T> patch_image(const Tensor<T>& x, int patch) {
    require_image(x, "patch_image");
    if (patch < 1 || patch % 2 == 0) throw DimensionError("patch_image: patch size must be odd");
    ConvGeom g{x.dim(0), x.dim(1), x.dim(2), patch, 1, patch / 2, x.dim(0), x.dim(1)};
    std::vector<T> out(static_cast<std::size_t>(g.rows()) * g.row_len());
    im2col(x.data().data(), g, out.data());
    return make_result<T>(Shape{g.height, g.width, g.row_len()}, std::move(out), {x}, "patch_image",
                          [g](Node<T>& self) {
                              col2im_accumulate(self.grad.data(), g, self.inputs[0]->grad_buffer().data());
                          });
}

template <typename T>
Tensor<T> windowed_topk_attention(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v, int window,
                                  int topk) {
    require_image(q, "windowed_topk_attention");
    require_same_shape(q, k, "windowed_topk_attention");
    require_image(v, "windowed_topk_attention");
    if (v.dim(0) != q.dim(0) || v.dim(1) != q.dim(1))
        throw DimensionError("windowed_topk_attention: value image has different spatial size");
    const int h = q.dim(0);
    const int w = q.dim(1);
    const int e = q.dim(2);
    const int d = v.dim(2);
    auto sel = std::make_shared<Selection<T>>(select_topk(q.data().data(), k.data().data(), h, w, e, window, topk));
    const int n = h * w;
    std::vector<T> out(static_cast<std::size_t>(n) * d, T(0));
    const auto vv = v.data();
    for (int j = 0; j < n; ++j) {
        T* dst = out.data() + static_cast<std::size_t>(j) * d;
        for (int i = 0; i < sel->count[j]; ++i) {
            const std::size_t s = static_cast<std::size_t>(j) * topk + i;
            const T a = sel->weight[s];
            const T* src = vv.data() + static_cast<std::size_t>(sel->index[s]) * d;
            for (int c = 0; c < d; ++c) dst[c] += a * src[c];
        }
    }
    return make_result<T>(Shape{h, w, d}, std::move(out), {q, k, v}, "windowed_topk_attention",
                          [sel, n, e, d, topk](Node<T>& self) {
                              Node<T>* nq = self.inputs[0].get();
                              Node<T>* nk = self.inputs[1].get();
                              Node<T>* nv = self.inputs[2].get();
                              const T inv = T(1) / std::sqrt(static_cast<T>(e));
                              std::vector<T> da(topk);
                              for (int j = 0; j < n; ++j) {
                                  const T* gj = self.grad.data() + static_cast<std::size_t>(j) * d;
                                  const int cnt = sel->count[j];
                                  T dot = 0;
                                  for (int i = 0; i < cnt; ++i) {
                                      const std::size_t s = static_cast<std::size_t>(j) * topk + i;
                                      const int l = sel->index[s];
                                      const T* vl = nv->value.data() + static_cast<std::size_t>(l) * d;
                                      T acc = 0;
                                      for (int c = 0; c < d; ++c) acc += gj[c] * vl[c];
                                      da[i] = acc;
                                      dot += sel->weight[s] * acc;
                                      if (nv->requires_grad) {
                                          T* gv = nv->grad_buffer().data() + static_cast<std::size_t>(l) * d;
                                          for (int c = 0; c < d; ++c) gv[c] += sel->weight[s] * gj[c];
                                      }
                                  }
                                  if (!nq->requires_grad && !nk->requires_grad) continue;
                                  const T* qj = nq->value.data() + static_cast<std::size_t>(j) * e;
                                  for (int i = 0; i < cnt; ++i) {
                                      const std::size_t s = static_cast<std::size_t>(j) * topk + i;
                                      const int l = sel->index[s];
                                      const T ds = sel->weight[s] * (da[i] - dot) * inv;
                                      const T* kl = nk->value.data() + static_cast<std::size_t>(l) * e;
                                      if (nq->requires_grad) {
                                          T* gq = nq->grad_buffer().data() + static_cast<std::size_t>(j) * e;
                                          for (int c = 0; c < e; ++c) gq[c] += ds * kl[c];
                                      }
                                      if (nk->requires_grad) {
                                          T* gk = nk->grad_buffer().data() + static_cast<std::size_t>(l) * e;
                                          for (int c = 0; c < e; ++c) gk[c] += ds * qj[c];
                                      }
                                  }
                              }
                          });
}

template <typename T>
AttentionSelection attention_selection(const Tensor<T>& q, const Tensor<T>& k, int window, int topk) {
    require_image(q, "attention_selection");
    require_same_shape(q, k, "attention_selection");
    auto sel = select_topk(q.data().data(), k.data().data(), q.dim(0), q.dim(1), q.dim(2), window, topk);
    AttentionSelection out;
    out.height = q.dim(0);
    out.width = q.dim(1);
    out.topk = topk;
    out.count = std::move(sel.count);
    out.index = std::move(sel.index);
    out.weight.assign(sel.weight.begin(), sel.weight.end());
    return out;
}

#define JSSU_INSTANTIATE_OPS(T)                                                                              \
    template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                                              \
    template Tensor<T> sub(const Tensor<T>&, const Tensor<T>&);                                              \
    template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                                              \
    template Tensor<T> scale(const Tensor<T>&, T);                                                           \
    template Tensor<T> scale_by(const Tensor<T>&, const Tensor<T>&);                                         \
    template Tensor<T> relu(const Tensor<T>&);                                                               \
    template Tensor<T> sigmoid(const Tensor<T>&);                                                            \
    template Tensor<T> sum(const Tensor<T>&);                                                                \
    template Tensor<T> half_squared_norm(const Tensor<T>&);                                                  \
    template Tensor<T> mean_abs_diff(const Tensor<T>&, const Tensor<T>&);                                    \
    template Tensor<T> reshape(const Tensor<T>&, Shape);                                                     \
    template Tensor<T> concat_channels(const std::vector<Tensor<T>>&);                                       \
    template Tensor<T> bias_add(const Tensor<T>&, const Tensor<T>&);                                         \
    template Tensor<T> conv2d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, int, int);               \
    template Tensor<T> conv_transpose2d(const Tensor<T>&, const Tensor<T>&, int);                            \
    template Tensor<T> bicubic_resize(const Tensor<T>&, int, int);                                           \
    template Tensor<T> bicubic_resize(const Tensor<T>&, double);                                             \
    template Tensor<T> softmax(const Tensor<T>&, int);                                                       \
    template Tensor<T> linear(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);                         \
    template Tensor<T> gather_rows(const Tensor<T>&, const std::vector<int>&);                               \
    template Tensor<T> scatter_rows(const std::vector<Tensor<T>>&, const std::vector<std::vector<int>>&, int); \
    template Tensor<T> channel_mean(const Tensor<T>&);                                                       \
    template Tensor<T> channel_scale(const Tensor<T>&, const Tensor<T>&);                                    \
    template Tensor<T> roll(const Tensor<T>&, int, int);                                                     \
    template Tensor<T> patch_image(const Tensor<T>&, int);                                                   \
    template Tensor<T> windowed_topk_attention(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, int, int); \
    template AttentionSelection attention_selection(const Tensor<T>&, const Tensor<T>&, int, int);

JSSU_INSTANTIATE_OPS(float)
JSSU_INSTANTIATE_OPS(double)

}  // namespace jssu
