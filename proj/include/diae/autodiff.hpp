#pragma once

#include <string>
#include <utility>
#include <vector>

#include "diae/kernels.hpp"
#include "diae/tensor.hpp"

namespace diae {

// Define-by-run tape. Nodes are recorded in creation order, which is a
// topological order by construction; values are computed eagerly so the tape
// doubles as the activation store for backpropagation. Training mode keeps
// whatever the backward pass needs (im2col buffers, norm statistics);
// inference mode drops them.
template <class T>
class Graph {
public:
    enum class Op {
        Leaf,
        Conv2d,
        Dense,
        GroupNorm,
        SiLU,
        Add,
        AddRowHW,
        BroadcastHW,
        ConcatCh,
        Upsample2x,
        Scale,
        Mse,
        EmbedMean,
        SelectRows,
    };

    struct Node {
        Op op = Op::Leaf;
        int a = -1, b = -1, c = -1;
        Tensor<T> val;
        Tensor<T> grad;
        bool trainable = false;
        bool needs_grad = false;
        std::string name;
        int stride = 1;
        int groups = 8;
        int aux0 = 0, aux1 = 0;
        T scalar = T(0);
        Tensor<T> saved_col;            // conv
        Tensor<T> saved_mean, saved_istd; // groupnorm
        std::vector<std::vector<int>> rows; // embed_mean / select_rows
    };

    bool train_mode = true;

    int leaf(Tensor<T> v, bool trainable = false, std::string name = {}) {
        Node nd;
        nd.op = Op::Leaf;
        nd.val = std::move(v);
        nd.trainable = trainable;
        nd.needs_grad = trainable;
        nd.name = std::move(name);
        return push(std::move(nd));
    }

    // x:[N,Ci,H,W] w:[Co,Ci,k,k] b:[Co] or -1
    int conv2d(int x, int w, int b, int stride) {
        const auto& xv = val(x);
        const auto& wv = val(w);
        require(xv.rank() == 4 && wv.rank() == 4, "conv2d: rank mismatch");
        require(wv.dim(2) == wv.dim(3), "conv2d: square kernels only");
        require(xv.dim(1) == wv.dim(1),
                "conv2d: input channels " + std::to_string(xv.dim(1)) +
                    " vs kernel " + std::to_string(wv.dim(1)));
        const auto d = kern::ConvDims::make(xv.dim(0), xv.dim(1), xv.dim(2),
                                            xv.dim(3), wv.dim(0), wv.dim(2), stride);
        Node nd;
        nd.op = Op::Conv2d;
        nd.a = x;
        nd.b = w;
        nd.c = b;
        nd.stride = stride;
        nd.needs_grad = wants_grad(x) || wants_grad(w) || wants_grad(b);
        nd.val = Tensor<T>({d.n, d.co, d.ho, d.wo});
        const bool save_col = train_mode && nd.needs_grad && d.k == 3;
        if (save_col)
            nd.saved_col = Tensor<T>({d.n, int(d.col_rows()), int(d.col_cols())});
        kern::conv2d_fwd(d, val(x).ptr(), wv.ptr(), b >= 0 ? val(b).ptr() : nullptr,
                         nd.val.ptr(), save_col ? nd.saved_col.ptr() : nullptr);
        if (!train_mode) nd.saved_col = {};
        return push(std::move(nd));
    }

    // x:[N,In] w:[In,Out] b:[Out] or -1
    int dense(int x, int w, int b) {
        const auto& xv = val(x);
        const auto& wv = val(w);
        require(xv.rank() == 2 && wv.rank() == 2 && xv.dim(1) == wv.dim(0),
                "dense: shape mismatch " + shape_str(xv.shape) + " x " +
                    shape_str(wv.shape));
        const int n = xv.dim(0), in = xv.dim(1), out = wv.dim(1);
        Node nd;
        nd.op = Op::Dense;
        nd.a = x;
        nd.b = w;
        nd.c = b;
        nd.needs_grad = wants_grad(x) || wants_grad(w) || wants_grad(b);
        nd.val = Tensor<T>({n, out});
        // small row-wise products, kept off the GEMM path so each row's
        // result is independent of the batch it rides in
        const T* bv = nullptr;
        if (b >= 0) {
            require(val(b).numel() == size_t(out), "dense: bias size");
            bv = val(b).ptr();
        }
        for (int i = 0; i < n; ++i) {
            const T* xr = xv.ptr() + size_t(i) * in;
            T* yr = nd.val.ptr() + size_t(i) * out;
            for (int j = 0; j < out; ++j) yr[j] = bv ? bv[j] : T(0);
            for (int k = 0; k < in; ++k) {
                const T xk = xr[k];
                const T* wr = wv.ptr() + size_t(k) * out;
#pragma omp simd
                for (int j = 0; j < out; ++j) yr[j] += xk * wr[j];
            }
        }
        return push(std::move(nd));
    }

    int groupnorm(int x, int gamma, int beta, int groups) {
        const auto& xv = val(x);
        require(xv.rank() == 4, "groupnorm: rank");
        require(xv.dim(1) % groups == 0, "groupnorm: channels not divisible");
        Node nd;
        nd.op = Op::GroupNorm;
        nd.a = x;
        nd.b = gamma;
        nd.c = beta;
        nd.groups = groups;
        nd.needs_grad = wants_grad(x) || wants_grad(gamma) || wants_grad(beta);
        nd.val = Tensor<T>(xv.shape);
        nd.saved_mean = Tensor<T>({xv.dim(0), groups});
        nd.saved_istd = Tensor<T>({xv.dim(0), groups});
        kern::groupnorm_fwd(xv.dim(0), xv.dim(1), xv.dim(2) * xv.dim(3), groups,
                            xv.ptr(), val(gamma).ptr(), val(beta).ptr(),
                            nd.val.ptr(), nd.saved_mean.ptr(), nd.saved_istd.ptr());
        if (!train_mode) {
            nd.saved_mean = {};
            nd.saved_istd = {};
        }
        return push(std::move(nd));
    }

    int silu(int x) {
        Node nd;
        nd.op = Op::SiLU;
        nd.a = x;
        nd.needs_grad = wants_grad(x);
        nd.val = Tensor<T>(val(x).shape);
        kern::silu_fwd(val(x).ptr(), nd.val.ptr(), nd.val.numel());
        return push(std::move(nd));
    }

    int add(int a, int b) {
        const auto& av = val(a);
        const auto& bv = val(b);
        require(av.shape == bv.shape, "add: shape mismatch " +
                                          shape_str(av.shape) + " vs " +
                                          shape_str(bv.shape));
        Node nd;
        nd.op = Op::Add;
        nd.a = a;
        nd.b = b;
        nd.needs_grad = wants_grad(a) || wants_grad(b);
        nd.val = Tensor<T>(av.shape);
        const size_t n = av.numel();
        const T* pa = av.ptr();
        const T* pb = bv.ptr();
        T* py = nd.val.ptr();
#pragma omp parallel for simd schedule(static)
        for (size_t i = 0; i < n; ++i) py[i] = pa[i] + pb[i];
        return push(std::move(nd));
    }

    // x:[N,C,H,W] + r:[N,C] broadcast over spatial
    int add_row_hw(int x, int r) {
        const auto& xv = val(x);
        const auto& rv = val(r);
        require(xv.rank() == 4 && rv.rank() == 2 && xv.dim(0) == rv.dim(0) &&
                    xv.dim(1) == rv.dim(1),
                "add_row_hw: shape mismatch");
        Node nd;
        nd.op = Op::AddRowHW;
        nd.a = x;
        nd.b = r;
        nd.needs_grad = wants_grad(x) || wants_grad(r);
        nd.val = Tensor<T>(xv.shape);
        const int n = xv.dim(0), c = xv.dim(1), hw = xv.dim(2) * xv.dim(3);
#pragma omp parallel for collapse(2) schedule(static)
        for (int ni = 0; ni < n; ++ni)
            for (int ci = 0; ci < c; ++ci) {
                const T rval = rv[size_t(ni) * c + ci];
                const T* xs = xv.ptr() + (size_t(ni) * c + ci) * hw;
                T* ys = nd.val.ptr() + (size_t(ni) * c + ci) * hw;
#pragma omp simd
                for (int i = 0; i < hw; ++i) ys[i] = xs[i] + rval;
            }
        return push(std::move(nd));
    }

    // r:[N,F] -> [N,F,h,w]
    int broadcast_hw(int r, int h, int w) {
        const auto& rv = val(r);
        require(rv.rank() == 2, "broadcast_hw: rank");
        Node nd;
        nd.op = Op::BroadcastHW;
        nd.a = r;
        nd.aux0 = h;
        nd.aux1 = w;
        nd.needs_grad = wants_grad(r);
        nd.val = Tensor<T>({rv.dim(0), rv.dim(1), h, w});
        const int n = rv.dim(0), f = rv.dim(1), hw = h * w;
#pragma omp parallel for collapse(2) schedule(static)
        for (int ni = 0; ni < n; ++ni)
            for (int fi = 0; fi < f; ++fi) {
                const T v = rv[size_t(ni) * f + fi];
                T* ys = nd.val.ptr() + (size_t(ni) * f + fi) * hw;
                for (int i = 0; i < hw; ++i) ys[i] = v;
            }
        return push(std::move(nd));
    }

    int concat_ch(int a, int b) {
        const auto& av = val(a);
        const auto& bv = val(b);
        require(av.rank() == 4 && bv.rank() == 4 && av.dim(0) == bv.dim(0) &&
                    av.dim(2) == bv.dim(2) && av.dim(3) == bv.dim(3),
                "concat_ch: shape mismatch");
        Node nd;
        nd.op = Op::ConcatCh;
        nd.a = a;
        nd.b = b;
        nd.needs_grad = wants_grad(a) || wants_grad(b);
        const int n = av.dim(0), ca = av.dim(1), cb = bv.dim(1),
                  hw = av.dim(2) * av.dim(3);
        nd.val = Tensor<T>({n, ca + cb, av.dim(2), av.dim(3)});
#pragma omp parallel for schedule(static)
        for (int ni = 0; ni < n; ++ni) {
            std::memcpy(nd.val.ptr() + size_t(ni) * (ca + cb) * hw,
                        av.ptr() + size_t(ni) * ca * hw, sizeof(T) * ca * hw);
            std::memcpy(nd.val.ptr() + (size_t(ni) * (ca + cb) + ca) * hw,
                        bv.ptr() + size_t(ni) * cb * hw, sizeof(T) * cb * hw);
        }
        return push(std::move(nd));
    }

    int upsample2x(int x) {
        const auto& xv = val(x);
        require(xv.rank() == 4, "upsample2x: rank");
        const int n = xv.dim(0), c = xv.dim(1), h = xv.dim(2), w = xv.dim(3);
        Node nd;
        nd.op = Op::Upsample2x;
        nd.a = x;
        nd.needs_grad = wants_grad(x);
        nd.val = Tensor<T>({n, c, 2 * h, 2 * w});
#pragma omp parallel for collapse(2) schedule(static)
        for (int ni = 0; ni < n; ++ni)
            for (int ci = 0; ci < c; ++ci) {
                const T* xs = xv.ptr() + (size_t(ni) * c + ci) * h * w;
                T* ys = nd.val.ptr() + (size_t(ni) * c + ci) * 4 * h * w;
                for (int y = 0; y < h; ++y)
                    for (int x2 = 0; x2 < w; ++x2) {
                        const T v = xs[size_t(y) * w + x2];
                        T* d0 = ys + size_t(2 * y) * 2 * w + 2 * x2;
                        d0[0] = v;
                        d0[1] = v;
                        d0[2 * w] = v;
                        d0[2 * w + 1] = v;
                    }
            }
        return push(std::move(nd));
    }

    int scale(int x, T s) {
        Node nd;
        nd.op = Op::Scale;
        nd.a = x;
        nd.scalar = s;
        nd.needs_grad = wants_grad(x);
        nd.val = Tensor<T>(val(x).shape);
        const size_t n = nd.val.numel();
        const T* px = val(x).ptr();
        T* py = nd.val.ptr();
#pragma omp parallel for simd schedule(static)
        for (size_t i = 0; i < n; ++i) py[i] = s * px[i];
        return push(std::move(nd));
    }

    int mse(int a, int b) {
        const auto& av = val(a);
        const auto& bv = val(b);
        require(av.shape == bv.shape, "mse: shape mismatch");
        Node nd;
        nd.op = Op::Mse;
        nd.a = a;
        nd.b = b;
        nd.needs_grad = wants_grad(a) || wants_grad(b);
        nd.val = Tensor<T>::scalar(kern::mse_value(av.ptr(), bv.ptr(), av.numel()));
        return push(std::move(nd));
    }

    // table:[V,F]; one token list per sample; mean of token rows, empty -> 0
    int embed_mean(int table, std::vector<std::vector<int>> tokens) {
        const auto& tv = val(table);
        require(tv.rank() == 2, "embed_mean: table rank");
        const int v = tv.dim(0), f = tv.dim(1);
        Node nd;
        nd.op = Op::EmbedMean;
        nd.a = table;
        nd.rows = std::move(tokens);
        nd.needs_grad = wants_grad(table);
        nd.val = Tensor<T>({int(nd.rows.size()), f});
        for (size_t ni = 0; ni < nd.rows.size(); ++ni) {
            const auto& toks = nd.rows[ni];
            for (int tok : toks)
                require(tok >= 0 && tok < v, "embed_mean: token out of range");
            if (toks.empty()) continue;
            const T inv = T(1) / T(toks.size());
            T* out = nd.val.ptr() + ni * f;
            for (int tok : toks) {
                const T* row = tv.ptr() + size_t(tok) * f;
                for (int j = 0; j < f; ++j) out[j] += row[j];
            }
            for (int j = 0; j < f; ++j) out[j] *= inv;
        }
        return push(std::move(nd));
    }

    // x:[N,...] -> rows sel of x
    int select_rows(int x, std::vector<int> sel) {
        const auto& xv = val(x);
        require(xv.rank() >= 2, "select_rows: rank");
        const size_t rowsz = xv.numel() / size_t(xv.dim(0));
        Node nd;
        nd.op = Op::SelectRows;
        nd.a = x;
        nd.rows.push_back(std::move(sel));
        nd.needs_grad = wants_grad(x);
        Shape s = xv.shape;
        s[0] = int(nd.rows[0].size());
        nd.val = Tensor<T>(s);
        for (size_t i = 0; i < nd.rows[0].size(); ++i) {
            const int src = nd.rows[0][i];
            require(src >= 0 && src < xv.dim(0), "select_rows: index out of range");
            std::memcpy(nd.val.ptr() + i * rowsz, xv.ptr() + size_t(src) * rowsz,
                        sizeof(T) * rowsz);
        }
        return push(std::move(nd));
    }

    const Tensor<T>& val(int id) const { return nodes_[size_t(id)].val; }
    const Tensor<T>& grad(int id) const { return nodes_[size_t(id)].grad; }
    const Node& node(int id) const { return nodes_[size_t(id)]; }
    size_t size() const { return nodes_.size(); }

    // Gradient of a scalar terminal w.r.t. every trainable leaf.
    void backward(int terminal) {
        require(!nodes_.empty(), "backward: empty tape");
        require(terminal >= 0 && terminal < int(nodes_.size()), "backward: bad id");
        require(nodes_[size_t(terminal)].val.numel() == 1,
                "backward: terminal must be scalar");
        touch_grad(terminal);
        nodes_[size_t(terminal)].grad[0] = T(1);
        for (int id = terminal; id >= 0; --id) {
            Node& nd = nodes_[size_t(id)];
            if (!nd.needs_grad || nd.grad.empty() || nd.op == Op::Leaf) continue;
            backward_node(nd);
        }
    }

    std::vector<std::pair<std::string, const Tensor<T>*>> gradient_map() const {
        std::vector<std::pair<std::string, const Tensor<T>*>> out;
        for (const Node& nd : nodes_)
            if (nd.op == Op::Leaf && nd.trainable && !nd.grad.empty())
                out.emplace_back(nd.name, &nd.grad);
        return out;
    }

private:
    std::vector<Node> nodes_;

    bool wants_grad(int id) const {
        return train_mode && id >= 0 && nodes_[size_t(id)].needs_grad;
    }

    int push(Node nd) {
        if (!train_mode) nd.needs_grad = false;
        if (exec().check_finite && !nd.val.all_finite())
            throw TensorError("non-finite value in forward op " +
                              std::to_string(int(nd.op)));
        nodes_.push_back(std::move(nd));
        return int(nodes_.size()) - 1;
    }

    void touch_grad(int id) {
        Node& nd = nodes_[size_t(id)];
        if (nd.grad.empty()) nd.grad = Tensor<T>(nd.val.shape);
    }

    T* grad_for(int id) {
        if (id < 0 || !nodes_[size_t(id)].needs_grad) return nullptr;
        touch_grad(id);
        return nodes_[size_t(id)].grad.ptr();
    }

    void backward_node(Node& nd) {
        switch (nd.op) {
        case Op::Conv2d: {
            const auto& xv = val(nd.a);
            const auto& wv = val(nd.b);
            const auto d = kern::ConvDims::make(xv.dim(0), xv.dim(1), xv.dim(2),
                                                xv.dim(3), wv.dim(0), wv.dim(2),
                                                nd.stride);
            if (T* dx = grad_for(nd.a)) kern::conv2d_dgrad(d, wv.ptr(), nd.grad.ptr(), dx);
            T* dw = grad_for(nd.b);
            T* db = grad_for(nd.c);
            if (dw || db) {
                require(dw != nullptr, "conv2d: bias trainable but weight frozen");
                kern::conv2d_wgrad(d, xv.ptr(),
                                   nd.saved_col.empty() ? nullptr : nd.saved_col.ptr(),
                                   nd.grad.ptr(), dw, db);
            }
            break;
        }
        case Op::Dense: {
            const auto& xv = val(nd.a);
            const auto& wv = val(nd.b);
            const int n = xv.dim(0), in = xv.dim(1), out = wv.dim(1);
            if (T* dx = grad_for(nd.a))
                for (int i = 0; i < n; ++i) {
                    const T* gr = nd.grad.ptr() + size_t(i) * out;
                    T* dxr = dx + size_t(i) * in;
                    for (int k = 0; k < in; ++k) {
                        const T* wr = wv.ptr() + size_t(k) * out;
                        T acc = T(0);
#pragma omp simd reduction(+ : acc)
                        for (int j = 0; j < out; ++j) acc += gr[j] * wr[j];
                        dxr[k] += acc;
                    }
                }
            if (T* dw = grad_for(nd.b))
                for (int i = 0; i < n; ++i) {
                    const T* xr = xv.ptr() + size_t(i) * in;
                    const T* gr = nd.grad.ptr() + size_t(i) * out;
                    for (int k = 0; k < in; ++k) {
                        const T xk = xr[k];
                        T* dwr = dw + size_t(k) * out;
#pragma omp simd
                        for (int j = 0; j < out; ++j) dwr[j] += xk * gr[j];
                    }
                }
            if (T* db = grad_for(nd.c))
                for (int j = 0; j < out; ++j) {
                    double acc = 0.0;
                    for (int i = 0; i < n; ++i)
                        acc += double(nd.grad[size_t(i) * out + j]);
                    db[j] += T(acc);
                }
            break;
        }
        case Op::GroupNorm: {
            const auto& xv = val(nd.a);
            T* dx = grad_for(nd.a);
            T* dgamma = grad_for(nd.b);
            T* dbeta = grad_for(nd.c);
            // gamma/beta gradients come out of the same kernel; route unused
            // ones into scratch
            Tensor<T> scratch_g, scratch_b, scratch_x;
            if (!dgamma) {
                scratch_g = Tensor<T>(val(nd.b).shape);
                dgamma = scratch_g.ptr();
            }
            if (!dbeta) {
                scratch_b = Tensor<T>(val(nd.c).shape);
                dbeta = scratch_b.ptr();
            }
            if (!dx) {
                scratch_x = Tensor<T>(xv.shape);
                dx = scratch_x.ptr();
            }
            kern::groupnorm_bwd(xv.dim(0), xv.dim(1), xv.dim(2) * xv.dim(3),
                                nd.groups, xv.ptr(), val(nd.b).ptr(),
                                nd.saved_mean.ptr(), nd.saved_istd.ptr(),
                                nd.grad.ptr(), dx, dgamma, dbeta);
            break;
        }
        case Op::SiLU:
            if (T* dx = grad_for(nd.a))
                kern::silu_bwd(val(nd.a).ptr(), nd.grad.ptr(), dx, nd.grad.numel());
            break;
        case Op::Add: {
            const size_t n = nd.grad.numel();
            for (int in : {nd.a, nd.b})
                if (T* dx = grad_for(in)) {
                    const T* g = nd.grad.ptr();
#pragma omp parallel for simd schedule(static)
                    for (size_t i = 0; i < n; ++i) dx[i] += g[i];
                }
            break;
        }
        case Op::AddRowHW: {
            const auto& xv = val(nd.a);
            const int n = xv.dim(0), c = xv.dim(1), hw = xv.dim(2) * xv.dim(3);
            if (T* dx = grad_for(nd.a)) {
                const T* g = nd.grad.ptr();
                const size_t tot = nd.grad.numel();
#pragma omp parallel for simd schedule(static)
                for (size_t i = 0; i < tot; ++i) dx[i] += g[i];
            }
            if (T* dr = grad_for(nd.b)) {
#pragma omp parallel for collapse(2) schedule(static)
                for (int ni = 0; ni < n; ++ni)
                    for (int ci = 0; ci < c; ++ci) {
                        const T* g = nd.grad.ptr() + (size_t(ni) * c + ci) * hw;
                        double acc = 0.0;
                        for (int i = 0; i < hw; ++i) acc += double(g[i]);
                        dr[size_t(ni) * c + ci] += T(acc);
                    }
            }
            break;
        }
        case Op::BroadcastHW: {
            if (T* dr = grad_for(nd.a)) {
                const auto& rv = val(nd.a);
                const int n = rv.dim(0), f = rv.dim(1), hw = nd.aux0 * nd.aux1;
#pragma omp parallel for collapse(2) schedule(static)
                for (int ni = 0; ni < n; ++ni)
                    for (int fi = 0; fi < f; ++fi) {
                        const T* g = nd.grad.ptr() + (size_t(ni) * f + fi) * hw;
                        double acc = 0.0;
                        for (int i = 0; i < hw; ++i) acc += double(g[i]);
                        dr[size_t(ni) * f + fi] += T(acc);
                    }
            }
            break;
        }
        case Op::ConcatCh: {
            const auto& av = val(nd.a);
            const auto& bv = val(nd.b);
            const int n = av.dim(0), ca = av.dim(1), cb = bv.dim(1),
                      hw = av.dim(2) * av.dim(3);
            if (T* da = grad_for(nd.a))
#pragma omp parallel for schedule(static)
                for (int ni = 0; ni < n; ++ni) {
                    const T* g = nd.grad.ptr() + size_t(ni) * (ca + cb) * hw;
                    T* d = da + size_t(ni) * ca * hw;
                    for (size_t i = 0; i < size_t(ca) * hw; ++i) d[i] += g[i];
                }
            if (T* dbp = grad_for(nd.b))
#pragma omp parallel for schedule(static)
                for (int ni = 0; ni < n; ++ni) {
                    const T* g = nd.grad.ptr() + (size_t(ni) * (ca + cb) + ca) * hw;
                    T* d = dbp + size_t(ni) * cb * hw;
                    for (size_t i = 0; i < size_t(cb) * hw; ++i) d[i] += g[i];
                }
            break;
        }
        case Op::Upsample2x: {
            if (T* dx = grad_for(nd.a)) {
                const auto& xv = val(nd.a);
                const int n = xv.dim(0), c = xv.dim(1), h = xv.dim(2), w = xv.dim(3);
#pragma omp parallel for collapse(2) schedule(static)
                for (int ni = 0; ni < n; ++ni)
                    for (int ci = 0; ci < c; ++ci) {
                        const T* g = nd.grad.ptr() + (size_t(ni) * c + ci) * 4 * h * w;
                        T* d = dx + (size_t(ni) * c + ci) * h * w;
                        for (int y = 0; y < h; ++y)
                            for (int x2 = 0; x2 < w; ++x2) {
                                const T* g0 = g + size_t(2 * y) * 2 * w + 2 * x2;
                                d[size_t(y) * w + x2] +=
                                    g0[0] + g0[1] + g0[2 * w] + g0[2 * w + 1];
                            }
                    }
            }
            break;
        }
        case Op::Scale: {
            if (T* dx = grad_for(nd.a)) {
                const size_t n = nd.grad.numel();
                const T* g = nd.grad.ptr();
                const T s = nd.scalar;
#pragma omp parallel for simd schedule(static)
                for (size_t i = 0; i < n; ++i) dx[i] += s * g[i];
            }
            break;
        }
        case Op::Mse: {
            const auto& av = val(nd.a);
            const auto& bv = val(nd.b);
            const size_t n = av.numel();
            const T gscale = nd.grad[0] * T(2) / T(n);
            T* da = grad_for(nd.a);
            T* db = grad_for(nd.b);
            const T* pa = av.ptr();
            const T* pb = bv.ptr();
#pragma omp parallel for simd schedule(static)
            for (size_t i = 0; i < n; ++i) {
                const T d = gscale * (pa[i] - pb[i]);
                if (da) da[i] += d;
                if (db) db[i] -= d;
            }
            break;
        }
        case Op::EmbedMean: {
            if (T* dt = grad_for(nd.a)) {
                const int f = val(nd.a).dim(1);
                for (size_t ni = 0; ni < nd.rows.size(); ++ni) {
                    const auto& toks = nd.rows[ni];
                    if (toks.empty()) continue;
                    const T inv = T(1) / T(toks.size());
                    const T* g = nd.grad.ptr() + ni * f;
                    for (int tok : toks) {
                        T* drow = dt + size_t(tok) * f;
                        for (int j = 0; j < f; ++j) drow[j] += inv * g[j];
                    }
                }
            }
            break;
        }
        case Op::SelectRows: {
            if (T* dx = grad_for(nd.a)) {
                const size_t rowsz = val(nd.a).numel() / size_t(val(nd.a).dim(0));
                for (size_t i = 0; i < nd.rows[0].size(); ++i) {
                    const T* g = nd.grad.ptr() + i * rowsz;
                    T* d = dx + size_t(nd.rows[0][i]) * rowsz;
                    for (size_t j = 0; j < rowsz; ++j) d[j] += g[j];
                }
            }
            break;
        }
        case Op::Leaf:
            break;
        default:
            throw TensorError("backward: unsupported op id " +
                              std::to_string(int(nd.op)));
        }
    }
};

} // namespace diae
