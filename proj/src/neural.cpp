#include "fbsde/neural.hpp"

#include <cmath>

#include "fbsde/errors.hpp"
#include "fbsde/rng.hpp"

namespace fbsde {

ParamId ParameterStore::add(Matrix value) {
    grads_.push_back(Matrix::Zero(value.rows(), value.cols()));
    values_.push_back(std::move(value));
    return static_cast<ParamId>(values_.size()) - 1;
}

std::size_t ParameterStore::scalar_count() const {
    std::size_t n = 0;
    for (const auto& v : values_) n += static_cast<std::size_t>(v.size());
    return n;
}

void ParameterStore::zero_grads() {
    for (auto& g : grads_) g.setZero();
}

SubNetwork init_parameters(ParameterStore& store, const std::vector<int>& dims,
                           std::uint64_t seed, Activation activation) {
    if (dims.size() < 2) throw DimensionMismatch("init_parameters: need at least 2 layer sizes");
    SubNetwork net;
    net.activation = activation;
    net.input_dim = dims.front();
    net.output_dim = dims.back();
    NormalStream stream(derive_seed(seed, 0x6e6574ULL), 0);
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
        const int fan_in = dims[l];
        const int fan_out = dims[l + 1];
        const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
        Matrix w(fan_out, fan_in);
        for (int i = 0; i < fan_out; ++i)
            for (int j = 0; j < fan_in; ++j)
                w(i, j) = (2.0 * stream.next_uniform() - 1.0) * limit;
        net.weights.push_back(store.add(std::move(w)));
        net.biases.push_back(store.add(Matrix::Zero(1, fan_out)));
    }
    return net;
}

namespace {

// tanh via the vectorized exp kernel; Eigen's tanh() falls back to the scalar
// libm call for doubles. Agrees with std::tanh to machine precision.
inline auto fast_tanh(const Matrix& m) {
    return (1.0 - 2.0 / ((2.0 * m.array()).exp() + 1.0)).matrix();
}

void apply_activation(Matrix& m, Activation act) {
    if (act == Activation::tanh)
        m = fast_tanh(m);
    else
        m = m.cwiseMax(0.0);
}

}  // namespace

Matrix net_eval_batch(const ParameterStore& store, const SubNetwork& net, const Matrix& x) {
    if (x.cols() != net.input_dim) throw DimensionMismatch("net_eval: bad input width");
    Matrix h = x;
    const std::size_t layers = net.weights.size();
    for (std::size_t l = 0; l < layers; ++l) {
        Matrix next = h * store.value(net.weights[l]).transpose();
        next.rowwise() += store.value(net.biases[l]).row(0);
        if (l + 1 < layers) apply_activation(next, net.activation);
        h = std::move(next);
    }
    return h;
}

Eigen::VectorXd net_eval(const ParameterStore& store, const SubNetwork& net,
                         const Eigen::VectorXd& x) {
    return net_eval_batch(store, net, x.transpose()).row(0).transpose();
}

SubNetworkStack make_stack(ParameterStore& store, int dim, int steps, std::uint64_t seed,
                           Activation activation, bool forward_extras) {
    SubNetworkStack stack;
    stack.networks.reserve(steps);
    const std::vector<int> dims = {dim, dim + 10, dim + 10, dim};
    for (int i = 0; i < steps; ++i)
        stack.networks.push_back(
            init_parameters(store, dims, derive_seed(seed, static_cast<std::uint64_t>(i)),
                            activation));
    if (forward_extras) {
        stack.y0 = store.add(Matrix::Zero(1, 1));
        stack.z0 = store.add(Matrix::Zero(1, dim));
    }
    return stack;
}

// --- tape -------------------------------------------------------------------

Tape::Node& Tape::next_slot() {
    if (live_ == static_cast<int>(nodes_.size())) nodes_.emplace_back();
    Node& n = nodes_[live_];
    n.a = n.b = -1;
    n.pw = n.pb = -1;
    n.c = 0.0;
    n.grad_live = false;
    return n;
}

Var Tape::finish(Node& n) {
    eval(n);
    return Var{live_++};
}

Var Tape::constant(const Matrix& v) {
    Node& n = next_slot();
    n.op = Op::constant;
    n.value = v;
    return Var{live_++};
}

Var Tape::constant(Matrix&& v) {
    Node& n = next_slot();
    n.op = Op::constant;
    n.value = std::move(v);
    return Var{live_++};
}

Var Tape::param(ParamId id) {
    Node& n = next_slot();
    n.op = Op::param;
    n.pw = id;
    return finish(n);
}

Var Tape::broadcast(Var a, int rows) {
    Node& n = next_slot();
    n.op = Op::broadcast;
    n.a = a.id;
    n.c = rows;
    return finish(n);
}

Var Tape::affine(Var x, ParamId w, ParamId b) {
    Node& n = next_slot();
    n.op = Op::affine;
    n.a = x.id;
    n.pw = w;
    n.pb = b;
    return finish(n);
}

Var Tape::activation(Var a, Activation act) {
    Node& n = next_slot();
    n.op = act == Activation::tanh ? Op::tanh : Op::relu;
    n.a = a.id;
    return finish(n);
}

Var Tape::add(Var a, Var b) {
    Node& n = next_slot();
    n.op = Op::add;
    n.a = a.id;
    n.b = b.id;
    return finish(n);
}

Var Tape::sub(Var a, Var b) {
    Node& n = next_slot();
    n.op = Op::sub;
    n.a = a.id;
    n.b = b.id;
    return finish(n);
}

Var Tape::mul(Var a, Var b) {
    Node& n = next_slot();
    n.op = Op::mul;
    n.a = a.id;
    n.b = b.id;
    return finish(n);
}

Var Tape::div(Var a, Var b) {
    Node& n = next_slot();
    n.op = Op::div;
    n.a = a.id;
    n.b = b.id;
    return finish(n);
}

Var Tape::scale(Var a, double c) {
    Node& n = next_slot();
    n.op = Op::scale;
    n.a = a.id;
    n.c = c;
    return finish(n);
}

Var Tape::row_sum(Var a) {
    Node& n = next_slot();
    n.op = Op::row_sum;
    n.a = a.id;
    return finish(n);
}

Var Tape::square(Var a) {
    Node& n = next_slot();
    n.op = Op::square;
    n.a = a.id;
    return finish(n);
}

Var Tape::mean_all(Var a) {
    Node& n = next_slot();
    n.op = Op::mean_all;
    n.a = a.id;
    return finish(n);
}

Var Tape::select(const std::vector<unsigned char>& take_first, Var first, Var second) {
    Node& n = next_slot();
    n.op = Op::select;
    n.a = first.id;
    n.b = second.id;
    n.mask = take_first;
    return finish(n);
}

Var Tape::net_forward(const SubNetwork& net, Var x) {
    Node& n = next_slot();
    n.op = Op::net_apply;
    n.a = x.id;
    n.net = net;
    return finish(n);
}

// --- fused sub-network op ----------------------------------------------------
//
// The whole sub-network is one tape node. Only its input and output are kept;
// hidden activations are recomputed blockwise during the backward sweep so the
// working set stays cache-resident. This is what makes per-iteration cost
// compute-bound instead of DRAM-bound on N x (d+10)-wide stacks.

namespace {

constexpr long kNetBlock = 512;

template <typename Dst, typename Src>
void blocked_layer(Dst&& out, const Src& in, const Matrix& w, const Matrix& b, Activation act,
                   bool nonlinear) {
    out.noalias() = in * w.transpose();
    out.rowwise() += b.row(0);
    if (!nonlinear) return;
    if (act == Activation::tanh)
        out = (1.0 - 2.0 / ((2.0 * out.array()).exp() + 1.0)).matrix();
    else
        out = out.cwiseMax(0.0);
}

}  // namespace

void Tape::eval_net(Node& n) {
    const Matrix& x = nodes_[n.a].value;
    const SubNetwork& net = n.net;
    if (x.cols() != net.input_dim) throw DimensionMismatch("net_forward: bad input width");
    const Matrix& w1 = store_->value(net.weights[0]);
    const Matrix& w2 = store_->value(net.weights[1]);
    const Matrix& w3 = store_->value(net.weights[2]);
    const Matrix& b1 = store_->value(net.biases[0]);
    const Matrix& b2 = store_->value(net.biases[1]);
    const Matrix& b3 = store_->value(net.biases[2]);

    const long m = x.rows();
    const long hidden = w1.rows();
    n.value.resize(m, net.output_dim);
    if (scratch_.size() < 2) scratch_.resize(2);
    Matrix& t1 = scratch_[0];
    Matrix& t2 = scratch_[1];
    if (t1.rows() < kNetBlock || t1.cols() != hidden) t1.resize(kNetBlock, hidden);
    if (t2.rows() < kNetBlock || t2.cols() != hidden) t2.resize(kNetBlock, hidden);

    for (long r0 = 0; r0 < m; r0 += kNetBlock) {
        const long rows = std::min(kNetBlock, m - r0);
        auto t1b = t1.topRows(rows);
        auto t2b = t2.topRows(rows);
        blocked_layer(t1b, x.middleRows(r0, rows), w1, b1, net.activation, true);
        blocked_layer(t2b, t1b, w2, b2, net.activation, true);
        blocked_layer(n.value.middleRows(r0, rows), t2b, w3, b3, net.activation, false);
    }
}

void Tape::backward_net(Node& n) {
    const Matrix& x = nodes_[n.a].value;
    const Matrix& dy = n.grad;
    const SubNetwork& net = n.net;
    const Matrix& w1 = store_->value(net.weights[0]);
    const Matrix& w2 = store_->value(net.weights[1]);
    const Matrix& w3 = store_->value(net.weights[2]);
    const Matrix& b1 = store_->value(net.biases[0]);
    const Matrix& b2 = store_->value(net.biases[1]);

    Matrix& gw1 = store_->grad(net.weights[0]);
    Matrix& gw2 = store_->grad(net.weights[1]);
    Matrix& gw3 = store_->grad(net.weights[2]);
    Matrix& gb1 = store_->grad(net.biases[0]);
    Matrix& gb2 = store_->grad(net.biases[1]);
    Matrix& gb3 = store_->grad(net.biases[2]);

    Node& input = nodes_[n.a];
    const bool want_dx = input.op != Op::constant;
    if (want_dx && !input.grad_live) {
        input.grad.setZero(x.rows(), x.cols());
        input.grad_live = true;
    }

    const long m = x.rows();
    const long hidden = w1.rows();
    if (scratch_.size() < 4) scratch_.resize(4);
    Matrix& t1 = scratch_[0];
    Matrix& t2 = scratch_[1];
    Matrix& d2 = scratch_[2];
    Matrix& d1 = scratch_[3];
    if (t1.rows() < kNetBlock || t1.cols() != hidden) t1.resize(kNetBlock, hidden);
    if (t2.rows() < kNetBlock || t2.cols() != hidden) t2.resize(kNetBlock, hidden);
    if (d2.rows() < kNetBlock || d2.cols() != hidden) d2.resize(kNetBlock, hidden);
    if (d1.rows() < kNetBlock || d1.cols() != hidden) d1.resize(kNetBlock, hidden);

    const auto activation_grad = [&](auto& delta, const auto& post) {
        if (net.activation == Activation::tanh)
            delta = (delta.array() * (1.0 - post.array().square())).matrix();
        else
            delta = (delta.array() * (post.array() > 0.0).template cast<double>()).matrix();
    };

    for (long r0 = 0; r0 < m; r0 += kNetBlock) {
        const long rows = std::min(kNetBlock, m - r0);
        auto xb = x.middleRows(r0, rows);
        auto dyb = dy.middleRows(r0, rows);
        auto t1b = t1.topRows(rows);
        auto t2b = t2.topRows(rows);
        auto d2b = d2.topRows(rows);
        auto d1b = d1.topRows(rows);

        blocked_layer(t1b, xb, w1, b1, net.activation, true);
        blocked_layer(t2b, t1b, w2, b2, net.activation, true);

        gw3.noalias() += dyb.transpose() * t2b;
        gb3 += dyb.colwise().sum();
        d2b.noalias() = dyb * w3;
        activation_grad(d2b, t2b);

        gw2.noalias() += d2b.transpose() * t1b;
        gb2 += d2b.colwise().sum();
        d1b.noalias() = d2b * w2;
        activation_grad(d1b, t1b);

        gw1.noalias() += d1b.transpose() * xb;
        gb1 += d1b.colwise().sum();
        if (want_dx) input.grad.middleRows(r0, rows).noalias() += d1b * w1;
    }
}

void Tape::eval(Node& n) {
    const auto& nd = nodes_;
    switch (n.op) {
        case Op::constant:
            break;
        case Op::param:
            n.value = store_->value(n.pw);
            break;
        case Op::broadcast:
            n.value = nd[n.a].value.replicate(static_cast<int>(n.c), 1);
            break;
        case Op::affine: {
            n.value.noalias() = nd[n.a].value * store_->value(n.pw).transpose();
            n.value.rowwise() += store_->value(n.pb).row(0);
            break;
        }
        case Op::tanh:
            n.value = fast_tanh(nd[n.a].value);
            break;
        case Op::relu:
            n.value = nd[n.a].value.cwiseMax(0.0);
            break;
        case Op::add:
            n.value = nd[n.a].value + nd[n.b].value;
            break;
        case Op::sub:
            n.value = nd[n.a].value - nd[n.b].value;
            break;
        case Op::mul:
            n.value = nd[n.a].value.cwiseProduct(nd[n.b].value);
            break;
        case Op::div:
            n.value = nd[n.a].value.cwiseQuotient(nd[n.b].value);
            break;
        case Op::scale:
            n.value = nd[n.a].value * n.c;
            break;
        case Op::row_sum:
            n.value = nd[n.a].value.rowwise().sum();
            break;
        case Op::square:
            n.value = nd[n.a].value.array().square();
            break;
        case Op::mean_all:
            n.value = Matrix::Constant(1, 1, nd[n.a].value.mean());
            break;
        case Op::select: {
            n.value = nd[n.b].value;
            const auto& first = nd[n.a].value;
            for (long j = 0; j < n.value.rows(); ++j)
                if (n.mask[static_cast<std::size_t>(j)]) n.value.row(j) = first.row(j);
            break;
        }
        case Op::net_apply:
            eval_net(n);
            break;
        default:
            throw UnsupportedPrimitive("tape: unknown op in eval");
    }
}

void Tape::forward() {
    for (int i = 0; i < live_; ++i)
        if (nodes_[i].op != Op::constant) eval(nodes_[i]);
}

bool Tape::wants_grad(int idx) const { return nodes_[idx].op != Op::constant; }

void Tape::backward(Var loss) {
    if (loss.id < 0 || loss.id >= live_) throw DimensionMismatch("backward: bad loss node");
    if (nodes_[loss.id].value.size() != 1)
        throw DimensionMismatch("backward: loss must be a 1x1 node");

    store_->zero_grads();
    for (int i = 0; i < live_; ++i) nodes_[i].grad_live = false;
    nodes_[loss.id].grad = Matrix::Ones(1, 1);
    nodes_[loss.id].grad_live = true;

    for (int i = loss.id; i >= 0; --i) {
        Node& n = nodes_[i];
        if (!n.grad_live) continue;
        const Matrix& dy = n.grad;
        switch (n.op) {
            case Op::constant:
                break;
            case Op::param:
                store_->grad(n.pw) += dy;
                break;
            case Op::broadcast:
                if (wants_grad(n.a)) add_grad(nodes_[n.a], dy.colwise().sum());
                break;
            case Op::affine: {
                if (wants_grad(n.a)) add_grad(nodes_[n.a], dy * store_->value(n.pw));
                store_->grad(n.pw).noalias() += dy.transpose() * nodes_[n.a].value;
                store_->grad(n.pb) += dy.colwise().sum();
                break;
            }
            case Op::tanh:
                if (wants_grad(n.a))
                    add_grad(nodes_[n.a], (dy.array() * (1.0 - n.value.array().square())).matrix());
                break;
            case Op::relu:
                if (wants_grad(n.a))
                    add_grad(nodes_[n.a],
                             (dy.array() * (nodes_[n.a].value.array() > 0.0).cast<double>()).matrix());
                break;
            case Op::add:
                if (wants_grad(n.a)) add_grad(nodes_[n.a], dy);
                if (wants_grad(n.b)) add_grad(nodes_[n.b], dy);
                break;
            case Op::sub:
                if (wants_grad(n.a)) add_grad(nodes_[n.a], dy);
                if (wants_grad(n.b)) add_grad(nodes_[n.b], -dy);
                break;
            case Op::mul:
                if (wants_grad(n.a)) add_grad(nodes_[n.a], dy.cwiseProduct(nodes_[n.b].value));
                if (wants_grad(n.b)) add_grad(nodes_[n.b], dy.cwiseProduct(nodes_[n.a].value));
                break;
            case Op::div:
                if (wants_grad(n.a)) add_grad(nodes_[n.a], dy.cwiseQuotient(nodes_[n.b].value));
                if (wants_grad(n.b))
                    add_grad(nodes_[n.b],
                             -dy.cwiseProduct(n.value).cwiseQuotient(nodes_[n.b].value));
                break;
            case Op::scale:
                if (wants_grad(n.a)) add_grad(nodes_[n.a], dy * n.c);
                break;
            case Op::row_sum:
                if (wants_grad(n.a))
                    add_grad(nodes_[n.a], dy.replicate(1, nodes_[n.a].value.cols()));
                break;
            case Op::square:
                if (wants_grad(n.a))
                    add_grad(nodes_[n.a], (2.0 * dy.array() * nodes_[n.a].value.array()).matrix());
                break;
            case Op::mean_all: {
                const auto& src = nodes_[n.a].value;
                const double g = dy(0, 0) / static_cast<double>(src.size());
                if (wants_grad(n.a))
                    add_grad(nodes_[n.a], Matrix::Constant(src.rows(), src.cols(), g));
                break;
            }
            case Op::net_apply:
                backward_net(n);
                break;
            case Op::select: {
                Node& first = nodes_[n.a];
                Node& second = nodes_[n.b];
                const bool wa = wants_grad(n.a);
                const bool wb = wants_grad(n.b);
                if (wa && !first.grad_live) {
                    first.grad.setZero(first.value.rows(), first.value.cols());
                    first.grad_live = true;
                }
                if (wb && !second.grad_live) {
                    second.grad.setZero(second.value.rows(), second.value.cols());
                    second.grad_live = true;
                }
                for (long j = 0; j < dy.rows(); ++j) {
                    if (n.mask[static_cast<std::size_t>(j)]) {
                        if (wa) first.grad.row(j) += dy.row(j);
                    } else if (wb) {
                        second.grad.row(j) += dy.row(j);
                    }
                }
                break;
            }
            default:
                throw UnsupportedPrimitive("tape: unknown op in backward");
        }
    }
}

void compute_gradients(Tape& tape, Var loss) {
    tape.backward(loss);
}

// --- Adam -------------------------------------------------------------------

AdamState::AdamState(const ParameterStore& store, double lr) : learning_rate(lr) {
    first_moment.reserve(store.count());
    second_moment.reserve(store.count());
    for (ParamId id = 0; id < store.count(); ++id) {
        const auto& v = store.value(id);
        first_moment.push_back(Matrix::Zero(v.rows(), v.cols()));
        second_moment.push_back(Matrix::Zero(v.rows(), v.cols()));
    }
}

void adam_update(ParameterStore& store, AdamState& state) {
    ++state.step_count;
    const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step_count));
    const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step_count));
    for (ParamId id = 0; id < store.count(); ++id) {
        const auto& g = store.grad(id);
        auto& m = state.first_moment[id];
        auto& v = state.second_moment[id];
        m = state.beta1 * m + (1.0 - state.beta1) * g;
        v = state.beta2 * v + (1.0 - state.beta2) * g.cwiseProduct(g);
        store.value(id).array() -=
            state.learning_rate * (m.array() / bc1) /
            ((v.array() / bc2).sqrt() + state.epsilon);
    }
}

}  // namespace fbsde
