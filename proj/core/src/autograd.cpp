#include "dv/autograd.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <unordered_set>

namespace dv {

using MatRM = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapM = Eigen::Map<MatRM>;
using CMapM = Eigen::Map<const MatRM>;

namespace {
thread_local bool g_grad_enabled = true;
}

#ifdef DV_PROFILE
#include <chrono>
#include <cstdio>
#include <map>
namespace {
struct ProfEntry {
    double fwd = 0, bwd = 0;
    int64_t calls = 0;
};
std::map<std::string, ProfEntry>& prof_table() {
    static std::map<std::string, ProfEntry> t;
    return t;
}
struct ProfDump {
    ~ProfDump() {
        double tot_f = 0, tot_b = 0;
        for (auto& [k, v] : prof_table()) {
            std::printf("%-22s fwd %8.3f s  bwd %8.3f s  calls %lld\n", k.c_str(), v.fwd, v.bwd,
                        (long long)v.calls);
            tot_f += v.fwd;
            tot_b += v.bwd;
        }
        std::printf("%-22s fwd %8.3f s  bwd %8.3f s\n", "TOTAL", tot_f, tot_b);
    }
} g_prof_dump;
struct FwdTimer {
    const char* name;
    std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();
    explicit FwdTimer(const char* n) : name(n) {}
    ~FwdTimer() {
        auto& e = prof_table()[name];
        e.fwd += std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        e.calls++;
    }
};
std::function<void(Node&)> timed_bwd(const char* name, std::function<void(Node&)> fn) {
    return [name, fn = std::move(fn)](Node& n) {
        auto t0 = std::chrono::steady_clock::now();
        fn(n);
        prof_table()[name].bwd += std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    };
}
}  // namespace
#define DV_PROF_FWD(name) FwdTimer dv_prof_timer_(name)
#define DV_PROF_BWD(name, fn) timed_bwd(name, fn)
#else
#define DV_PROF_FWD(name)
#define DV_PROF_BWD(name, fn) fn
#endif

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : prev(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = prev; }

Var Var::leaf(Tensor value, bool requires_grad, std::string name) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    n->requires_grad = requires_grad;
    n->name = std::move(name);
    return Var(n);
}

namespace {

Var make_node(Tensor value, std::vector<Var> parents, std::function<void(Node&)> backprop) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    if (g_grad_enabled) {
        bool need = false;
        for (const auto& p : parents)
            if (p.requires_grad()) need = true;
        if (need) {
            n->requires_grad = true;
            n->parents.reserve(parents.size());
            for (auto& p : parents) n->parents.push_back(p.node());
            n->backprop = std::move(backprop);
        }
    }
    return Var(n);
}

void check_same_shape(const Var& a, const Var& b, const char* op) {
    if (!a.value().same_shape(b.value()))
        throw invalid_argument(std::string(op) + ": shape mismatch " + shape_str(a.dims()) + " vs " +
                               shape_str(b.dims()));
}

}  // namespace

void backward(const Var& root) {
    if (!root.defined() || !root.requires_grad()) return;
    // iterative topological sort
    std::vector<Node*> order;
    std::unordered_set<Node*> seen;
    std::vector<std::pair<Node*, size_t>> stack;
    stack.emplace_back(root.node().get(), 0);
    seen.insert(root.node().get());
    while (!stack.empty()) {
        Node* node = stack.back().first;
        size_t idx = stack.back().second;
        if (idx < node->parents.size()) {
            stack.back().second = idx + 1;
            Node* p = node->parents[idx].get();
            if (p->requires_grad && !seen.count(p)) {
                seen.insert(p);
                stack.emplace_back(p, 0);
            }
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }
    // order is now children-after-parents reversed; process root-first
    root.node()->ensure_grad();
    root.node()->grad.fill(1.0);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (n->backprop && !n->grad.empty()) n->backprop(*n);
    }
}

void zero_grad(const std::vector<Var>& params) {
    for (const auto& p : params)
        if (p.defined()) p.node()->grad = Tensor();
}

namespace ops {

// ---------------------------------------------------------------- elementwise

Var add(const Var& a, const Var& b) {
    check_same_shape(a, b, "add");
    Tensor out = a.value().clone();
    out.add_(b.value());
    auto an = a.node();
    auto bn = b.node();
    return make_node(std::move(out), {a, b}, [an, bn](Node& n) {
        if (an->requires_grad) an->accum_shared(n.grad);
        if (bn->requires_grad) bn->accum_clone(n.grad);
    });
}

Var sub(const Var& a, const Var& b) {
    check_same_shape(a, b, "sub");
    Tensor out = a.value().clone();
    out.axpy_(-1.0, b.value());
    auto an = a.node();
    auto bn = b.node();
    return make_node(std::move(out), {a, b}, [an, bn](Node& n) {
        if (an->requires_grad) an->accum_shared(n.grad);
        if (bn->requires_grad) {
            bn->ensure_grad();
            bn->grad.axpy_(-1.0, n.grad);
        }
    });
}

Var mul(const Var& a, const Var& b) {
    check_same_shape(a, b, "mul");
    Tensor out = Tensor::uninit(a.dims());
    const double* pa = a.value().data();
    const double* pb = b.value().data();
    double* po = out.data();
    for (int64_t i = 0; i < out.size(); ++i) po[i] = pa[i] * pb[i];
    auto an = a.node();
    auto bn = b.node();
    return make_node(std::move(out), {a, b}, [an, bn](Node& n) {
        const double* g = n.grad.data();
        if (an->requires_grad) {
            bool fresh = an->grad.empty();
            if (fresh) an->grad = Tensor::uninit(an->value.dims());
            double* da = an->grad.data();
            const double* vb = bn->value.data();
            if (fresh)
                for (int64_t i = 0; i < n.grad.size(); ++i) da[i] = g[i] * vb[i];
            else
                for (int64_t i = 0; i < n.grad.size(); ++i) da[i] += g[i] * vb[i];
        }
        if (bn->requires_grad) {
            bool fresh = bn->grad.empty();
            if (fresh) bn->grad = Tensor::uninit(bn->value.dims());
            double* db = bn->grad.data();
            const double* va = an->value.data();
            if (fresh)
                for (int64_t i = 0; i < n.grad.size(); ++i) db[i] = g[i] * va[i];
            else
                for (int64_t i = 0; i < n.grad.size(); ++i) db[i] += g[i] * va[i];
        }
    });
}

Var scale(const Var& a, double s) {
    Tensor out = a.value().clone();
    out.scale_(s);
    auto an = a.node();
    return make_node(std::move(out), {a}, [an, s](Node& n) {
        if (!an->requires_grad) return;
        an->ensure_grad();
        an->grad.axpy_(s, n.grad);
    });
}

Var silu(const Var& a) {
    Tensor out = Tensor::uninit(a.dims());
    const int64_t n_ = a.size();
    {
        Eigen::Map<const Eigen::ArrayXd> x(a.value().data(), n_);
        Eigen::Map<Eigen::ArrayXd> y(out.data(), n_);
        y = x / (1.0 + (-x).exp());
    }
    auto an = a.node();
    return make_node(std::move(out), {a}, [an, n_](Node& n) {
        if (!an->requires_grad) return;
        an->ensure_grad();
        Eigen::Map<const Eigen::ArrayXd> x(an->value.data(), n_);
        Eigen::Map<const Eigen::ArrayXd> g(n.grad.data(), n_);
        Eigen::Map<Eigen::ArrayXd> dx(an->grad.data(), n_);
        Eigen::ArrayXd s = 1.0 / (1.0 + (-x).exp());
        dx += g * s * (1.0 + x * (1.0 - s));
    });
}

Var abs_val(const Var& a) {
    Tensor out = Tensor::uninit(a.dims());
    const double* x = a.value().data();
    double* y = out.data();
    for (int64_t i = 0; i < out.size(); ++i) y[i] = std::fabs(x[i]);
    auto an = a.node();
    return make_node(std::move(out), {a}, [an](Node& n) {
        if (!an->requires_grad) return;
        an->ensure_grad();
        const double* x = an->value.data();
        const double* g = n.grad.data();
        double* dx = an->grad.data();
        for (int64_t i = 0; i < n.grad.size(); ++i) dx[i] += (x[i] > 0 ? g[i] : (x[i] < 0 ? -g[i] : 0.0));
    });
}

Var add_broadcast0(const Var& x, const Var& c) {
    int64_t inner = c.size();
    if (x.size() % inner != 0)
        throw invalid_argument("add_broadcast0: " + shape_str(x.dims()) + " not tileable by " + shape_str(c.dims()));
    int64_t reps = x.size() / inner;
    Tensor out = x.value().clone();
    double* po = out.data();
    const double* pc = c.value().data();
    for (int64_t r = 0; r < reps; ++r)
        for (int64_t i = 0; i < inner; ++i) po[r * inner + i] += pc[i];
    auto xn = x.node();
    auto cn = c.node();
    return make_node(std::move(out), {x, c}, [xn, cn, reps, inner](Node& n) {
        const double* g = n.grad.data();
        if (xn->requires_grad) {
            xn->ensure_grad();
            xn->grad.add_(n.grad);
        }
        if (cn->requires_grad) {
            cn->ensure_grad();
            double* dc = cn->grad.data();
            for (int64_t r = 0; r < reps; ++r)
                for (int64_t i = 0; i < inner; ++i) dc[i] += g[r * inner + i];
        }
    });
}

// ---------------------------------------------------------------------- shape

Var reshape(const Var& x, Shape dims) {
    Tensor out = x.value().reshaped(std::move(dims));
    auto xn = x.node();
    return make_node(std::move(out), {x}, [xn](Node& n) {
        if (!xn->requires_grad) return;
        xn->accum_shared(n.grad.reshaped(xn->value.dims()));
    });
}

namespace {

std::vector<int64_t> row_strides(const Shape& dims) {
    std::vector<int64_t> st(dims.size(), 1);
    for (int i = static_cast<int>(dims.size()) - 2; i >= 0; --i) st[i] = st[i + 1] * dims[i + 1];
    return st;
}

Tensor permute_tensor(const Tensor& in, const std::vector<int>& perm) {
    const Shape& id = in.dims();
    int nd = in.ndim();
    Shape od(nd);
    for (int i = 0; i < nd; ++i) od[static_cast<size_t>(i)] = id[static_cast<size_t>(perm[static_cast<size_t>(i)])];
    Tensor out = Tensor::uninit(od);
    auto ist = row_strides(id);
    // stride in the input for each output axis
    std::vector<int64_t> map(nd);
    for (int i = 0; i < nd; ++i) map[static_cast<size_t>(i)] = ist[static_cast<size_t>(perm[static_cast<size_t>(i)])];
    const double* src = in.data();
    double* dst = out.data();
    std::vector<int64_t> idx(nd, 0);
    int64_t src_off = 0;
    for (int64_t o = 0; o < out.size(); ++o) {
        dst[o] = src[src_off];
        for (int a = nd - 1; a >= 0; --a) {
            idx[a]++;
            src_off += map[a];
            if (idx[a] < od[a]) break;
            src_off -= map[a] * od[a];
            idx[a] = 0;
        }
    }
    return out;
}

}  // namespace

Var permute(const Var& x, const std::vector<int>& perm) {
    if (static_cast<int>(perm.size()) != x.value().ndim())
        throw invalid_argument("permute: axis count mismatch");
    Tensor out = permute_tensor(x.value(), perm);
    std::vector<int> inv(perm.size());
    for (size_t i = 0; i < perm.size(); ++i) inv[static_cast<size_t>(perm[i])] = static_cast<int>(i);
    auto xn = x.node();
    return make_node(std::move(out), {x}, [xn, inv](Node& n) {
        if (!xn->requires_grad) return;
        xn->accum(permute_tensor(n.grad, inv));
    });
}

Var concat_axis0(const std::vector<Var>& xs) {
    if (xs.empty()) throw invalid_argument("concat_axis0: empty input");
    Shape trailing(xs[0].dims().begin() + 1, xs[0].dims().end());
    int64_t inner = 1;
    for (int64_t d : trailing) inner *= d;
    int64_t rows = 0;
    for (const auto& x : xs) {
        Shape t(x.dims().begin() + 1, x.dims().end());
        if (t != trailing) throw invalid_argument("concat_axis0: trailing shape mismatch");
        rows += x.dims()[0];
    }
    Shape od = xs[0].dims();
    od[0] = rows;
    Tensor out = Tensor::uninit(od);
    double* po = out.data();
    int64_t off = 0;
    for (const auto& x : xs) {
        const double* p = x.value().data();
        std::copy(p, p + x.size(), po + off);
        off += x.size();
    }
    std::vector<Var> parents = xs;
    std::vector<NodePtr> nodes;
    for (const auto& x : xs) nodes.push_back(x.node());
    return make_node(std::move(out), std::move(parents), [nodes](Node& n) {
        const double* g = n.grad.data();
        int64_t off = 0;
        for (const auto& pn : nodes) {
            int64_t sz = pn->value.size();
            if (pn->requires_grad) {
                pn->ensure_grad();
                double* dp = pn->grad.data();
                for (int64_t i = 0; i < sz; ++i) dp[i] += g[off + i];
            }
            off += sz;
        }
    });
}

Var concat_channel(const Var& a, const Var& b) {
    const Shape& da = a.dims();
    const Shape& db = b.dims();
    if (da.size() != 4 || db.size() != 4 || da[0] != db[0] || da[2] != db[2] || da[3] != db[3])
        throw invalid_argument("concat_channel: incompatible shapes " + shape_str(da) + " vs " + shape_str(db));
    int64_t N = da[0], Ca = da[1], Cb = db[1], HW = da[2] * da[3];
    Tensor out = Tensor::uninit({N, Ca + Cb, da[2], da[3]});
    const double* pa = a.value().data();
    const double* pb = b.value().data();
    double* po = out.data();
    for (int64_t n = 0; n < N; ++n) {
        std::copy(pa + n * Ca * HW, pa + (n + 1) * Ca * HW, po + n * (Ca + Cb) * HW);
        std::copy(pb + n * Cb * HW, pb + (n + 1) * Cb * HW, po + n * (Ca + Cb) * HW + Ca * HW);
    }
    auto an = a.node();
    auto bn = b.node();
    return make_node(std::move(out), {a, b}, [an, bn, N, Ca, Cb, HW](Node& n) {
        const double* g = n.grad.data();
        if (an->requires_grad) {
            an->ensure_grad();
            double* da_ = an->grad.data();
            for (int64_t i = 0; i < N; ++i)
                for (int64_t j = 0; j < Ca * HW; ++j) da_[i * Ca * HW + j] += g[i * (Ca + Cb) * HW + j];
        }
        if (bn->requires_grad) {
            bn->ensure_grad();
            double* db_ = bn->grad.data();
            for (int64_t i = 0; i < N; ++i)
                for (int64_t j = 0; j < Cb * HW; ++j) db_[i * Cb * HW + j] += g[i * (Ca + Cb) * HW + Ca * HW + j];
        }
    });
}

Var slice_axis0(const Var& x, int64_t start, int64_t len) {
    const Shape& d = x.dims();
    if (start < 0 || len <= 0 || start + len > d[0]) throw invalid_argument("slice_axis0: out of range");
    int64_t inner = x.size() / d[0];
    Shape od = d;
    od[0] = len;
    Tensor out = Tensor::uninit(od);
    const double* p = x.value().data();
    std::copy(p + start * inner, p + (start + len) * inner, out.data());
    auto xn = x.node();
    return make_node(std::move(out), {x}, [xn, start, inner](Node& n) {
        if (!xn->requires_grad) return;
        xn->ensure_grad();
        double* dx = xn->grad.data();
        const double* g = n.grad.data();
        for (int64_t i = 0; i < n.grad.size(); ++i) dx[start * inner + i] += g[i];
    });
}

Var slice_cols(const Var& x, int64_t start, int64_t len) {
    const Shape& d = x.dims();
    if (d.size() != 2) throw invalid_argument("slice_cols: expected 2-d");
    int64_t N = d[0], K = d[1];
    if (start < 0 || len <= 0 || start + len > K) throw invalid_argument("slice_cols: out of range");
    Tensor out = Tensor::uninit({N, len});
    const double* p = x.value().data();
    double* po = out.data();
    for (int64_t i = 0; i < N; ++i)
        for (int64_t j = 0; j < len; ++j) po[i * len + j] = p[i * K + start + j];
    auto xn = x.node();
    return make_node(std::move(out), {x}, [xn, start, N, K, len](Node& n) {
        if (!xn->requires_grad) return;
        xn->ensure_grad();
        double* dx = xn->grad.data();
        const double* g = n.grad.data();
        for (int64_t i = 0; i < N; ++i)
            for (int64_t j = 0; j < len; ++j) dx[i * K + start + j] += g[i * len + j];
    });
}

Var repeat_interleave0(const Var& x, int64_t times) {
    const Shape& d = x.dims();
    int64_t B = d[0], inner = x.size() / B;
    Shape od = d;
    od[0] = B * times;
    Tensor out = Tensor::uninit(od);
    const double* p = x.value().data();
    double* po = out.data();
    for (int64_t b = 0; b < B; ++b)
        for (int64_t k = 0; k < times; ++k)
            std::copy(p + b * inner, p + (b + 1) * inner, po + (b * times + k) * inner);
    auto xn = x.node();
    return make_node(std::move(out), {x}, [xn, B, times, inner](Node& n) {
        if (!xn->requires_grad) return;
        xn->ensure_grad();
        double* dx = xn->grad.data();
        const double* g = n.grad.data();
        for (int64_t b = 0; b < B; ++b)
            for (int64_t k = 0; k < times; ++k)
                for (int64_t i = 0; i < inner; ++i) dx[b * inner + i] += g[(b * times + k) * inner + i];
    });
}

// ------------------------------------------------------------- linear algebra

Var linear(const Var& x, const Var& w, const Var& b) {
    const Shape& xd = x.dims();
    const Shape& wd = w.dims();
    if (xd.size() != 2 || wd.size() != 2 || xd[1] != wd[1])
        throw invalid_argument("linear: shape mismatch " + shape_str(xd) + " x " + shape_str(wd));
    int64_t N = xd[0], K = xd[1], O = wd[0];
    Tensor out = Tensor::uninit({N, O});
    {
        CMapM X(x.value().data(), N, K);
        CMapM W(w.value().data(), O, K);
        MapM Y(out.data(), N, O);
        Y.noalias() = X * W.transpose();
        if (b.defined()) {
            const double* pb = b.value().data();
            double* po = out.data();
            for (int64_t i = 0; i < N; ++i)
                for (int64_t j = 0; j < O; ++j) po[i * O + j] += pb[j];
        }
    }
    std::vector<Var> parents = b.defined() ? std::vector<Var>{x, w, b} : std::vector<Var>{x, w};
    auto xn = x.node();
    auto wn = w.node();
    auto bn = b.defined() ? b.node() : nullptr;
    return make_node(std::move(out), std::move(parents), [xn, wn, bn, N, K, O](Node& n) {
        CMapM G(n.grad.data(), N, O);
        if (xn->requires_grad) {
            bool fresh = xn->grad.empty();
            if (fresh) xn->grad = Tensor::uninit(xn->value.dims());
            MapM DX(xn->grad.data(), N, K);
            CMapM W(wn->value.data(), O, K);
            if (fresh)
                DX.noalias() = G * W;
            else
                DX.noalias() += G * W;
        }
        if (wn->requires_grad) {
            wn->ensure_grad();
            MapM DW(wn->grad.data(), O, K);
            CMapM X(xn->value.data(), N, K);
            DW.noalias() += G.transpose() * X;
        }
        if (bn && bn->requires_grad) {
            bn->ensure_grad();
            double* db = bn->grad.data();
            const double* g = n.grad.data();
            for (int64_t i = 0; i < N; ++i)
                for (int64_t j = 0; j < O; ++j) db[j] += g[i * O + j];
        }
    });
}

Var bmm(const Var& a, const Var& b, int64_t rhs_repeat, double alpha) {
    const Shape& ad = a.dims();
    const Shape& bd = b.dims();
    if (ad.size() != 3 || bd.size() != 3) throw invalid_argument("bmm: expected 3-d inputs");
    int64_t G = ad[0], M = ad[1], K = ad[2];
    int64_t Gb = bd[0], Kb = bd[1], N = bd[2];
    if (K != Kb || G != Gb * rhs_repeat)
        throw invalid_argument("bmm: shape mismatch " + shape_str(ad) + " x " + shape_str(bd) + " rep " +
                               std::to_string(rhs_repeat));
    Tensor out = Tensor::uninit({G, M, N});
    for (int64_t g = 0; g < G; ++g) {
        CMapM A(a.value().data() + g * M * K, M, K);
        CMapM B(b.value().data() + (g / rhs_repeat) * K * N, K, N);
        MapM C(out.data() + g * M * N, M, N);
        if (alpha == 1.0)
            C.noalias() = A * B;
        else
            C.noalias() = alpha * (A * B);
    }
    auto an = a.node();
    auto bn = b.node();
    return make_node(std::move(out), {a, b}, [an, bn, G, M, K, N, rhs_repeat, alpha](Node& n) {
        if (an->requires_grad) an->ensure_grad();
        if (bn->requires_grad) bn->ensure_grad();
        for (int64_t g = 0; g < G; ++g) {
            CMapM Gr(n.grad.data() + g * M * N, M, N);
            if (an->requires_grad) {
                MapM DA(an->grad.data() + g * M * K, M, K);
                CMapM B(bn->value.data() + (g / rhs_repeat) * K * N, K, N);
                if (alpha == 1.0)
                    DA.noalias() += Gr * B.transpose();
                else
                    DA.noalias() += alpha * (Gr * B.transpose());
            }
            if (bn->requires_grad) {
                MapM DB(bn->grad.data() + (g / rhs_repeat) * K * N, K, N);
                CMapM A(an->value.data() + g * M * K, M, K);
                if (alpha == 1.0)
                    DB.noalias() += A.transpose() * Gr;
                else
                    DB.noalias() += alpha * (A.transpose() * Gr);
            }
        }
    });
}

Var softmax_lastdim(const Var& x) {
    const Shape& d = x.dims();
    int64_t L = d.back();
    int64_t R = x.size() / L;
    Tensor out = Tensor::uninit(d);
    const double* px = x.value().data();
    double* py = out.data();
    for (int64_t r = 0; r < R; ++r) {
        Eigen::Map<const Eigen::ArrayXd> row(px + r * L, L);
        Eigen::Map<Eigen::ArrayXd> yrow(py + r * L, L);
        double m = row.maxCoeff();
        yrow = (row - m).exp();
        yrow /= yrow.sum();
    }
    auto xn = x.node();
    auto yval = std::make_shared<Tensor>(out);  // shares storage
    return make_node(std::move(out), {x}, [xn, yval, R, L](Node& n) {
        if (!xn->requires_grad) return;
        xn->ensure_grad();
        const double* y = yval->data();
        const double* g = n.grad.data();
        double* dx = xn->grad.data();
        for (int64_t r = 0; r < R; ++r) {
            double dot = 0.0;
            for (int64_t i = 0; i < L; ++i) dot += g[r * L + i] * y[r * L + i];
            for (int64_t i = 0; i < L; ++i) dx[r * L + i] += y[r * L + i] * (g[r * L + i] - dot);
        }
    });
}

// ------------------------------------------------- convolution / normalization

Var conv2d(const Var& x, const Var& w, const Var& b, int stride, int pad) {
    const Shape& xd = x.dims();
    const Shape& wd = w.dims();
    if (xd.size() != 4 || wd.size() != 4) throw invalid_argument("conv2d: expected 4-d tensors");
    int64_t N = xd[0], Ci = xd[1], H = xd[2], W = xd[3];
    int64_t Co = wd[0], kh = wd[2], kw = wd[3];
    if (wd[1] != Ci)
        throw invalid_argument("conv2d: channel mismatch input " + shape_str(xd) + " weight " + shape_str(wd));
    int64_t Ho = (H + 2 * pad - kh) / stride + 1;
    int64_t Wo = (W + 2 * pad - kw) / stride + 1;
    if (Ho <= 0 || Wo <= 0) throw invalid_argument("conv2d: output would be empty");
    int64_t CKK = Ci * kh * kw;
    int64_t OHW = Ho * Wo;

    auto cols = std::make_shared<std::vector<double>>(static_cast<size_t>(N * CKK * OHW));
    const double* px = x.value().data();
    for (int64_t n = 0; n < N; ++n) {
        double* cn = cols->data() + n * CKK * OHW;
        for (int64_t ci = 0; ci < Ci; ++ci) {
            for (int64_t ky = 0; ky < kh; ++ky) {
                for (int64_t kx = 0; kx < kw; ++kx) {
                    double* crow = cn + ((ci * kh + ky) * kw + kx) * OHW;
                    for (int64_t oy = 0; oy < Ho; ++oy) {
                        int64_t iy = oy * stride + ky - pad;
                        if (iy < 0 || iy >= H) {
                            std::fill(crow + oy * Wo, crow + (oy + 1) * Wo, 0.0);
                            continue;
                        }
                        const double* xr = px + ((n * Ci + ci) * H + iy) * W;
                        for (int64_t ox = 0; ox < Wo; ++ox) {
                            int64_t ix = ox * stride + kx - pad;
                            crow[oy * Wo + ox] = (ix >= 0 && ix < W) ? xr[ix] : 0.0;
                        }
                    }
                }
            }
        }
    }

    Tensor out = Tensor::uninit({N, Co, Ho, Wo});
    {
        CMapM Wm(w.value().data(), Co, CKK);
        for (int64_t n = 0; n < N; ++n) {
            CMapM C(cols->data() + n * CKK * OHW, CKK, OHW);
            MapM Y(out.data() + n * Co * OHW, Co, OHW);
            Y.noalias() = Wm * C;
        }
        if (b.defined()) {
            const double* pb = b.value().data();
            double* po = out.data();
            for (int64_t n = 0; n < N; ++n)
                for (int64_t co = 0; co < Co; ++co) {
                    double bias = pb[co];
                    double* prow = po + (n * Co + co) * OHW;
                    for (int64_t i = 0; i < OHW; ++i) prow[i] += bias;
                }
        }
    }

    std::vector<Var> parents = b.defined() ? std::vector<Var>{x, w, b} : std::vector<Var>{x, w};
    auto xn = x.node();
    auto wn = w.node();
    auto bn = b.defined() ? b.node() : nullptr;
    int64_t sH = H, sW = W;
    return make_node(std::move(out), std::move(parents),
                     [xn, wn, bn, cols, N, Ci, Co, kh, kw, Ho, Wo, CKK, OHW, stride, pad, sH, sW](Node& n) {
                         if (wn->requires_grad) {
                             wn->ensure_grad();
                             MapM DW(wn->grad.data(), Co, CKK);
                             for (int64_t i = 0; i < N; ++i) {
                                 CMapM G(n.grad.data() + i * Co * OHW, Co, OHW);
                                 CMapM C(cols->data() + i * CKK * OHW, CKK, OHW);
                                 DW.noalias() += G * C.transpose();
                             }
                         }
                         if (bn && bn->requires_grad) {
                             bn->ensure_grad();
                             double* db = bn->grad.data();
                             const double* g = n.grad.data();
                             for (int64_t i = 0; i < N; ++i)
                                 for (int64_t co = 0; co < Co; ++co) {
                                     double s = 0.0;
                                     const double* row = g + (i * Co + co) * OHW;
                                     for (int64_t k = 0; k < OHW; ++k) s += row[k];
                                     db[co] += s;
                                 }
                         }
                         if (xn->requires_grad) {
                             xn->ensure_grad();
                             CMapM Wm(wn->value.data(), Co, CKK);
                             std::vector<double> dcols(static_cast<size_t>(CKK * OHW));
                             double* dx = xn->grad.data();
                             for (int64_t i = 0; i < N; ++i) {
                                 CMapM G(n.grad.data() + i * Co * OHW, Co, OHW);
                                 MapM DC(dcols.data(), CKK, OHW);
                                 DC.noalias() = Wm.transpose() * G;
                                 // col2im scatter
                                 for (int64_t ci = 0; ci < Ci; ++ci)
                                     for (int64_t ky = 0; ky < kh; ++ky)
                                         for (int64_t kx = 0; kx < kw; ++kx) {
                                             const double* crow = dcols.data() + ((ci * kh + ky) * kw + kx) * OHW;
                                             for (int64_t oy = 0; oy < Ho; ++oy) {
                                                 int64_t iy = oy * stride + ky - pad;
                                                 if (iy < 0 || iy >= sH) continue;
                                                 double* xr = dx + ((i * Ci + ci) * sH + iy) * sW;
                                                 for (int64_t ox = 0; ox < Wo; ++ox) {
                                                     int64_t ix = ox * stride + kx - pad;
                                                     if (ix >= 0 && ix < sW) xr[ix] += crow[oy * Wo + ox];
                                                 }
                                             }
                                         }
                             }
                         }
                     });
}

Var conv1d_time(const Var& x, const Var& w, const Var& b, int64_t batch, int64_t frames) {
    const Shape& xd = x.dims();
    const Shape& wd = w.dims();
    if (xd.size() != 4 || wd.size() != 3) throw invalid_argument("conv1d_time: bad ranks");
    int64_t N = xd[0], Ci = xd[1], HW = xd[2] * xd[3];
    if (N != batch * frames) throw invalid_argument("conv1d_time: N != batch*frames");
    int64_t Co = wd[0], k = wd[2];
    if (wd[1] != Ci) throw invalid_argument("conv1d_time: channel mismatch");
    int64_t pad = (k - 1) / 2;
    int64_t CK = Ci * k;
    int64_t THW = frames * HW;

    auto cols = std::make_shared<std::vector<double>>(static_cast<size_t>(batch * CK * THW));
    const double* px = x.value().data();
    for (int64_t bi = 0; bi < batch; ++bi) {
        double* cb = cols->data() + bi * CK * THW;
        for (int64_t ci = 0; ci < Ci; ++ci)
            for (int64_t dk = 0; dk < k; ++dk) {
                double* crow = cb + (ci * k + dk) * THW;
                for (int64_t t = 0; t < frames; ++t) {
                    int64_t ts = t + dk - pad;
                    if (ts < 0 || ts >= frames) {
                        std::fill(crow + t * HW, crow + (t + 1) * HW, 0.0);
                        continue;
                    }
                    const double* src = px + ((bi * frames + ts) * Ci + ci) * HW;
                    std::copy(src, src + HW, crow + t * HW);
                }
            }
    }

    Tensor out = Tensor::uninit({N, Co, xd[2], xd[3]});
    {
        CMapM Wm(w.value().data(), Co, CK);
        std::vector<double> ybuf(static_cast<size_t>(Co * THW));
        const double* pb = b.defined() ? b.value().data() : nullptr;
        for (int64_t bi = 0; bi < batch; ++bi) {
            CMapM C(cols->data() + bi * CK * THW, CK, THW);
            MapM Y(ybuf.data(), Co, THW);
            Y.noalias() = Wm * C;
            double* po = out.data();
            for (int64_t co = 0; co < Co; ++co)
                for (int64_t t = 0; t < frames; ++t) {
                    double bias = pb ? pb[co] : 0.0;
                    const double* yr = ybuf.data() + co * THW + t * HW;
                    double* orow = po + ((bi * frames + t) * Co + co) * HW;
                    for (int64_t i = 0; i < HW; ++i) orow[i] = yr[i] + bias;
                }
        }
    }

    std::vector<Var> parents = b.defined() ? std::vector<Var>{x, w, b} : std::vector<Var>{x, w};
    auto xn = x.node();
    auto wn = w.node();
    auto bn = b.defined() ? b.node() : nullptr;
    return make_node(std::move(out), std::move(parents),
                     [xn, wn, bn, cols, batch, frames, Ci, Co, k, pad, CK, THW, HW](Node& n) {
                         // regroup grad to [Co, THW] per batch item
                         std::vector<double> gbuf(static_cast<size_t>(Co * THW));
                         std::vector<double> dcols(static_cast<size_t>(CK * THW));
                         const double* g = n.grad.data();
                         if (wn->requires_grad) wn->ensure_grad();
                         if (bn && bn->requires_grad) bn->ensure_grad();
                         if (xn->requires_grad) xn->ensure_grad();
                         for (int64_t bi = 0; bi < batch; ++bi) {
                             for (int64_t co = 0; co < Co; ++co)
                                 for (int64_t t = 0; t < frames; ++t) {
                                     const double* src = g + ((bi * frames + t) * Co + co) * HW;
                                     std::copy(src, src + HW, gbuf.data() + co * THW + t * HW);
                                 }
                             CMapM G(gbuf.data(), Co, THW);
                             if (wn->requires_grad) {
                                 MapM DW(wn->grad.data(), Co, CK);
                                 CMapM C(cols->data() + bi * CK * THW, CK, THW);
                                 DW.noalias() += G * C.transpose();
                             }
                             if (bn && bn->requires_grad) {
                                 double* db = bn->grad.data();
                                 for (int64_t co = 0; co < Co; ++co) {
                                     double s = 0.0;
                                     const double* row = gbuf.data() + co * THW;
                                     for (int64_t i = 0; i < THW; ++i) s += row[i];
                                     db[co] += s;
                                 }
                             }
                             if (xn->requires_grad) {
                                 CMapM Wm(wn->value.data(), Co, CK);
                                 MapM DC(dcols.data(), CK, THW);
                                 DC.noalias() = Wm.transpose() * G;
                                 double* dx = xn->grad.data();
                                 for (int64_t ci = 0; ci < Ci; ++ci)
                                     for (int64_t dk = 0; dk < k; ++dk) {
                                         const double* crow = dcols.data() + (ci * k + dk) * THW;
                                         for (int64_t t = 0; t < frames; ++t) {
                                             int64_t ts = t + dk - pad;
                                             if (ts < 0 || ts >= frames) continue;
                                             double* dst = dx + ((bi * frames + ts) * Ci + ci) * HW;
                                             const double* sr = crow + t * HW;
                                             for (int64_t i = 0; i < HW; ++i) dst[i] += sr[i];
                                         }
                                     }
                             }
                         }
                     });
}

Var group_norm(const Var& x, const Var& gamma, const Var& beta, int groups, double eps) {
    const Shape& d = x.dims();
    if (d.size() != 4) throw invalid_argument("group_norm: expected 4-d input");
    int64_t N = d[0], C = d[1], HW = d[2] * d[3];
    if (C % groups != 0) throw invalid_argument("group_norm: channels not divisible by groups");
    int64_t Cg = C / groups;
    int64_t M = Cg * HW;

    Tensor out = Tensor::uninit(d);
    auto mean = std::make_shared<std::vector<double>>(static_cast<size_t>(N * groups));
    auto istd = std::make_shared<std::vector<double>>(static_cast<size_t>(N * groups));
    const double* px = x.value().data();
    const double* pg = gamma.value().data();
    const double* pb = beta.value().data();
    double* po = out.data();
    for (int64_t n = 0; n < N; ++n) {
        for (int64_t g = 0; g < groups; ++g) {
            const double* base = px + (n * C + g * Cg) * HW;
            double mu = 0.0;
            for (int64_t i = 0; i < M; ++i) mu += base[i];
            mu /= static_cast<double>(M);
            double var = 0.0;
            for (int64_t i = 0; i < M; ++i) {
                double dv_ = base[i] - mu;
                var += dv_ * dv_;
            }
            var /= static_cast<double>(M);
            double inv = 1.0 / std::sqrt(var + eps);
            (*mean)[n * groups + g] = mu;
            (*istd)[n * groups + g] = inv;
            double* obase = po + (n * C + g * Cg) * HW;
            for (int64_t c = 0; c < Cg; ++c) {
                double ga = pg[g * Cg + c];
                double be = pb[g * Cg + c];
                const double* xr = base + c * HW;
                double* yr = obase + c * HW;
                for (int64_t i = 0; i < HW; ++i) yr[i] = (xr[i] - mu) * inv * ga + be;
            }
        }
    }

    auto xn = x.node();
    auto gn = gamma.node();
    auto bn = beta.node();
    return make_node(std::move(out), {x, gamma, beta}, [xn, gn, bn, mean, istd, N, C, HW, groups, Cg, M](Node& n) {
        const double* g_ = n.grad.data();
        const double* px = xn->value.data();
        const double* pg = gn->value.data();
        if (gn->requires_grad) gn->ensure_grad();
        if (bn->requires_grad) bn->ensure_grad();
        if (xn->requires_grad) xn->ensure_grad();
        double* dgamma = gn->requires_grad ? gn->grad.data() : nullptr;
        double* dbeta = bn->requires_grad ? bn->grad.data() : nullptr;
        double* dx = xn->requires_grad ? xn->grad.data() : nullptr;
        for (int64_t i = 0; i < N; ++i) {
            for (int64_t gr = 0; gr < groups; ++gr) {
                double mu = (*mean)[i * groups + gr];
                double inv = (*istd)[i * groups + gr];
                const double* xbase = px + (i * C + gr * Cg) * HW;
                const double* gbase = g_ + (i * C + gr * Cg) * HW;
                if (dgamma || dbeta) {
                    for (int64_t c = 0; c < Cg; ++c) {
                        const double* xr = xbase + c * HW;
                        const double* grr = gbase + c * HW;
                        double sg = 0.0, sb = 0.0;
                        for (int64_t k = 0; k < HW; ++k) {
                            sg += grr[k] * (xr[k] - mu) * inv;
                            sb += grr[k];
                        }
                        if (dgamma) dgamma[gr * Cg + c] += sg;
                        if (dbeta) dbeta[gr * Cg + c] += sb;
                    }
                }
                if (dx) {
                    // dxh = dy * gamma ; dx = inv*(dxh - mean(dxh) - xh*mean(dxh*xh))
                    double s1 = 0.0, s2 = 0.0;
                    for (int64_t c = 0; c < Cg; ++c) {
                        double ga = pg[gr * Cg + c];
                        const double* xr = xbase + c * HW;
                        const double* grr = gbase + c * HW;
                        for (int64_t k = 0; k < HW; ++k) {
                            double dxh = grr[k] * ga;
                            s1 += dxh;
                            s2 += dxh * (xr[k] - mu) * inv;
                        }
                    }
                    double im = 1.0 / static_cast<double>(M);
                    double* dxbase = dx + (i * C + gr * Cg) * HW;
                    for (int64_t c = 0; c < Cg; ++c) {
                        double ga = pg[gr * Cg + c];
                        const double* xr = xbase + c * HW;
                        const double* grr = gbase + c * HW;
                        double* dr = dxbase + c * HW;
                        for (int64_t k = 0; k < HW; ++k) {
                            double xh = (xr[k] - mu) * inv;
                            double dxh = grr[k] * ga;
                            dr[k] += inv * (dxh - s1 * im - xh * s2 * im);
                        }
                    }
                }
            }
        }
    });
}

Var film(const Var& x, const Var& s, const Var& t) {
    const Shape& xd = x.dims();
    const Shape& sd = s.dims();
    if (xd.size() != 4 || sd.size() != 2 || sd[0] != xd[0] || sd[1] != xd[1] || !s.value().same_shape(t.value()))
        throw invalid_argument("film: bad shapes");
    int64_t N = xd[0], C = xd[1], HW = xd[2] * xd[3];
    Tensor out = Tensor::uninit(xd);
    const double* px = x.value().data();
    const double* ps = s.value().data();
    const double* pt = t.value().data();
    double* po = out.data();
    for (int64_t n = 0; n < N; ++n)
        for (int64_t c = 0; c < C; ++c) {
            double sc = 1.0 + ps[n * C + c];
            double sh = pt[n * C + c];
            const double* xr = px + (n * C + c) * HW;
            double* yr = po + (n * C + c) * HW;
            for (int64_t i = 0; i < HW; ++i) yr[i] = xr[i] * sc + sh;
        }
    auto xn = x.node();
    auto sn = s.node();
    auto tn = t.node();
    return make_node(std::move(out), {x, s, t}, [xn, sn, tn, N, C, HW](Node& n) {
        const double* g = n.grad.data();
        const double* px = xn->value.data();
        const double* ps = sn->value.data();
        if (xn->requires_grad) xn->ensure_grad();
        if (sn->requires_grad) sn->ensure_grad();
        if (tn->requires_grad) tn->ensure_grad();
        for (int64_t i = 0; i < N; ++i)
            for (int64_t c = 0; c < C; ++c) {
                const double* gr = g + (i * C + c) * HW;
                if (xn->requires_grad) {
                    double sc = 1.0 + ps[i * C + c];
                    double* dxr = xn->grad.data() + (i * C + c) * HW;
                    for (int64_t k = 0; k < HW; ++k) dxr[k] += gr[k] * sc;
                }
                if (sn->requires_grad || tn->requires_grad) {
                    const double* xr = px + (i * C + c) * HW;
                    double ssum = 0.0, tsum = 0.0;
                    for (int64_t k = 0; k < HW; ++k) {
                        ssum += gr[k] * xr[k];
                        tsum += gr[k];
                    }
                    if (sn->requires_grad) sn->grad.data()[i * C + c] += ssum;
                    if (tn->requires_grad) tn->grad.data()[i * C + c] += tsum;
                }
            }
    });
}

Var upsample_nearest2x(const Var& x) {
    const Shape& d = x.dims();
    if (d.size() != 4) throw invalid_argument("upsample_nearest2x: expected 4-d");
    int64_t N = d[0], C = d[1], H = d[2], W = d[3];
    Tensor out = Tensor::uninit({N, C, H * 2, W * 2});
    const double* px = x.value().data();
    double* po = out.data();
    for (int64_t nc = 0; nc < N * C; ++nc) {
        const double* src = px + nc * H * W;
        double* dst = po + nc * 4 * H * W;
        for (int64_t y = 0; y < H; ++y)
            for (int64_t xx = 0; xx < W; ++xx) {
                double v = src[y * W + xx];
                dst[(2 * y) * 2 * W + 2 * xx] = v;
                dst[(2 * y) * 2 * W + 2 * xx + 1] = v;
                dst[(2 * y + 1) * 2 * W + 2 * xx] = v;
                dst[(2 * y + 1) * 2 * W + 2 * xx + 1] = v;
            }
    }
    auto xn = x.node();
    return make_node(std::move(out), {x}, [xn, N, C, H, W](Node& n) {
        if (!xn->requires_grad) return;
        xn->ensure_grad();
        const double* g = n.grad.data();
        double* dx = xn->grad.data();
        for (int64_t nc = 0; nc < N * C; ++nc) {
            const double* gsrc = g + nc * 4 * H * W;
            double* dst = dx + nc * H * W;
            for (int64_t y = 0; y < H; ++y)
                for (int64_t xx = 0; xx < W; ++xx)
                    dst[y * W + xx] += gsrc[(2 * y) * 2 * W + 2 * xx] + gsrc[(2 * y) * 2 * W + 2 * xx + 1] +
                                       gsrc[(2 * y + 1) * 2 * W + 2 * xx] + gsrc[(2 * y + 1) * 2 * W + 2 * xx + 1];
        }
    });
}

Var gap2d(const Var& x) {
    const Shape& d = x.dims();
    if (d.size() != 4) throw invalid_argument("gap2d: expected 4-d");
    int64_t N = d[0], C = d[1], HW = d[2] * d[3];
    Tensor out = Tensor::uninit({N, C});
    const double* px = x.value().data();
    double* po = out.data();
    for (int64_t nc = 0; nc < N * C; ++nc) {
        double s = 0.0;
        const double* src = px + nc * HW;
        for (int64_t i = 0; i < HW; ++i) s += src[i];
        po[nc] = s / static_cast<double>(HW);
    }
    auto xn = x.node();
    return make_node(std::move(out), {x}, [xn, N, C, HW](Node& n) {
        if (!xn->requires_grad) return;
        xn->ensure_grad();
        const double* g = n.grad.data();
        double* dx = xn->grad.data();
        double im = 1.0 / static_cast<double>(HW);
        for (int64_t nc = 0; nc < N * C; ++nc) {
            double gv = g[nc] * im;
            double* dst = dx + nc * HW;
            for (int64_t i = 0; i < HW; ++i) dst[i] += gv;
        }
    });
}

Var add_frame_broadcast(const Var& x, const Var& y, int64_t frames) {
    const Shape& xd = x.dims();
    const Shape& yd = y.dims();
    if (xd.size() != 4 || yd.size() != 4) throw invalid_argument("add_frame_broadcast: expected 4-d");
    if (xd[0] != yd[0] * frames || xd[1] != yd[1] || xd[2] != yd[2] || xd[3] != yd[3])
        throw invalid_argument("add_frame_broadcast: incompatible shapes " + shape_str(xd) + " vs " + shape_str(yd) +
                               " frames " + std::to_string(frames));
    int64_t B = yd[0];
    int64_t inner = yd[1] * yd[2] * yd[3];
    Tensor out = x.value().clone();
    double* po = out.data();
    const double* py = y.value().data();
    for (int64_t b = 0; b < B; ++b)
        for (int64_t t = 0; t < frames; ++t) {
            double* dst = po + (b * frames + t) * inner;
            const double* src = py + b * inner;
            for (int64_t i = 0; i < inner; ++i) dst[i] += src[i];
        }
    auto xn = x.node();
    auto yn = y.node();
    return make_node(std::move(out), {x, y}, [xn, yn, B, frames, inner](Node& n) {
        const double* g = n.grad.data();
        if (xn->requires_grad) xn->accum_shared(n.grad);
        if (yn->requires_grad) {
            yn->ensure_grad();
            double* dy = yn->grad.data();
            for (int64_t b = 0; b < B; ++b)
                for (int64_t t = 0; t < frames; ++t) {
                    const double* src = g + (b * frames + t) * inner;
                    double* dst = dy + b * inner;
                    for (int64_t i = 0; i < inner; ++i) dst[i] += src[i];
                }
        }
    });
}

// -------------------------------------------------------- lookups & reductions

Var embedding_rows(const Var& table, const std::vector<int>& ids) {
    const Shape& d = table.dims();
    if (d.size() != 2) throw invalid_argument("embedding_rows: table must be 2-d");
    int64_t V = d[0], D = d[1];
    int64_t S = static_cast<int64_t>(ids.size());
    Tensor out = Tensor::uninit({S, D});
    const double* pt = table.value().data();
    double* po = out.data();
    for (int64_t s = 0; s < S; ++s) {
        int id = ids[static_cast<size_t>(s)];
        if (id < 0 || id >= V) throw invalid_argument("embedding_rows: id out of range");
        std::copy(pt + id * D, pt + (id + 1) * D, po + s * D);
    }
    auto tn = table.node();
    return make_node(std::move(out), {table}, [tn, ids, D](Node& n) {
        if (!tn->requires_grad) return;
        tn->ensure_grad();
        double* dt = tn->grad.data();
        const double* g = n.grad.data();
        for (size_t s = 0; s < ids.size(); ++s) {
            double* row = dt + static_cast<int64_t>(ids[s]) * D;
            const double* gr = g + static_cast<int64_t>(s) * D;
            for (int64_t i = 0; i < D; ++i) row[i] += gr[i];
        }
    });
}

Var mean_all(const Var& x) {
    double s = 0.0;
    const double* px = x.value().data();
    for (int64_t i = 0; i < x.size(); ++i) s += px[i];
    int64_t n_ = x.size();
    Tensor out = Tensor::scalar(s / static_cast<double>(n_));
    auto xn = x.node();
    return make_node(std::move(out), {x}, [xn, n_](Node& n) {
        if (!xn->requires_grad) return;
        xn->ensure_grad();
        double gv = n.grad[0] / static_cast<double>(n_);
        double* dx = xn->grad.data();
        for (int64_t i = 0; i < n_; ++i) dx[i] += gv;
    });
}

Var sum_axis0(const Var& x) {
    const Shape& d = x.dims();
    if (d.size() != 2) throw invalid_argument("sum_axis0: expected 2-d");
    int64_t T = d[0], F = d[1];
    Tensor out({F});
    const double* px = x.value().data();
    double* po = out.data();
    for (int64_t t = 0; t < T; ++t)
        for (int64_t f = 0; f < F; ++f) po[f] += px[t * F + f];
    auto xn = x.node();
    return make_node(std::move(out), {x}, [xn, T, F](Node& n) {
        if (!xn->requires_grad) return;
        xn->ensure_grad();
        double* dx = xn->grad.data();
        const double* g = n.grad.data();
        for (int64_t t = 0; t < T; ++t)
            for (int64_t f = 0; f < F; ++f) dx[t * F + f] += g[f];
    });
}

Var mean_axis0(const Var& x) {
    const Shape& d = x.dims();
    if (d.size() != 2) throw invalid_argument("mean_axis0: expected 2-d");
    return scale(sum_axis0(x), 1.0 / static_cast<double>(d[0]));
}

Var mse(const Var& a, const Var& b) {
    check_same_shape(a, b, "mse");
    const double* pa = a.value().data();
    const double* pb = b.value().data();
    double s = 0.0;
    for (int64_t i = 0; i < a.size(); ++i) {
        double d = pa[i] - pb[i];
        s += d * d;
    }
    int64_t n_ = a.size();
    Tensor out = Tensor::scalar(s / static_cast<double>(n_));
    auto an = a.node();
    auto bn = b.node();
    return make_node(std::move(out), {a, b}, [an, bn, n_](Node& n) {
        double gv = n.grad[0] * 2.0 / static_cast<double>(n_);
        const double* pa = an->value.data();
        const double* pb = bn->value.data();
        if (an->requires_grad) {
            an->ensure_grad();
            double* da = an->grad.data();
            for (int64_t i = 0; i < n_; ++i) da[i] += gv * (pa[i] - pb[i]);
        }
        if (bn->requires_grad) {
            bn->ensure_grad();
            double* db = bn->grad.data();
            for (int64_t i = 0; i < n_; ++i) db[i] -= gv * (pa[i] - pb[i]);
        }
    });
}

Var cross_entropy(const Var& logits, const std::vector<int>& labels) {
    const Shape& d = logits.dims();
    if (d.size() != 2 || d[0] != static_cast<int64_t>(labels.size()))
        throw invalid_argument("cross_entropy: bad shapes");
    int64_t N = d[0], K = d[1];
    auto probs = std::make_shared<Tensor>(Tensor::zeros({N, K}));
    const double* pl = logits.value().data();
    double* pp = probs->data();
    double loss = 0.0;
    for (int64_t i = 0; i < N; ++i) {
        const double* row = pl + i * K;
        double m = row[0];
        for (int64_t j = 1; j < K; ++j) m = std::max(m, row[j]);
        double s = 0.0;
        for (int64_t j = 0; j < K; ++j) {
            pp[i * K + j] = std::exp(row[j] - m);
            s += pp[i * K + j];
        }
        double inv = 1.0 / s;
        for (int64_t j = 0; j < K; ++j) pp[i * K + j] *= inv;
        loss -= std::log(std::max(pp[i * K + labels[static_cast<size_t>(i)]], 1e-300));
    }
    Tensor out = Tensor::scalar(loss / static_cast<double>(N));
    auto ln = logits.node();
    return make_node(std::move(out), {logits}, [ln, probs, labels, N, K](Node& n) {
        if (!ln->requires_grad) return;
        ln->ensure_grad();
        double gv = n.grad[0] / static_cast<double>(N);
        double* dl = ln->grad.data();
        const double* pp = probs->data();
        for (int64_t i = 0; i < N; ++i) {
            for (int64_t j = 0; j < K; ++j) dl[i * K + j] += gv * pp[i * K + j];
            dl[i * K + labels[static_cast<size_t>(i)]] -= gv;
        }
    });
}

}  // namespace ops

}  // namespace dv
