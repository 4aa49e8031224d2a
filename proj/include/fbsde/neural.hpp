#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

namespace fbsde {

using Matrix = Eigen::MatrixXd;

using ParamId = int;

// Flat registry of trainable parameter blocks with matching gradient buffers.
// Networks, the Adam optimizer and the tape all index into one store.
class ParameterStore {
  public:
    ParamId add(Matrix value);
    const Matrix& value(ParamId id) const { return values_[id]; }
    Matrix& value(ParamId id) { return values_[id]; }
    const Matrix& grad(ParamId id) const { return grads_[id]; }
    Matrix& grad(ParamId id) { return grads_[id]; }
    int count() const { return static_cast<int>(values_.size()); }
    std::size_t scalar_count() const;
    void zero_grads();

  private:
    std::vector<Matrix> values_;
    std::vector<Matrix> grads_;
};

enum class Activation { tanh, relu };

// One sub-network per time step: affine layers d -> d+10 -> d+10 -> d,
// nonlinear hidden layers, linear output.
struct SubNetwork {
    std::vector<ParamId> weights;  // W: out x in
    std::vector<ParamId> biases;   // b: 1 x out
    Activation activation = Activation::tanh;
    int input_dim = 0;
    int output_dim = 0;
};

// Glorot-uniform weights on +/- sqrt(6 / (fan_in + fan_out)), zero biases.
SubNetwork init_parameters(ParameterStore& store, const std::vector<int>& dims,
                           std::uint64_t seed, Activation activation = Activation::tanh);

// Plain inference, one sample. Throws DimensionMismatch on bad input length.
Eigen::VectorXd net_eval(const ParameterStore& store, const SubNetwork& net,
                         const Eigen::VectorXd& x);
// Batched inference, rows are samples.
Matrix net_eval_batch(const ParameterStore& store, const SubNetwork& net, const Matrix& x);

struct SubNetworkStack {
    std::vector<SubNetwork> networks;  // one per time step i = 0..N-1
    ParamId y0 = -1;                   // 1x1, forward method only
    ParamId z0 = -1;                   // 1xd, forward method only
    bool has_forward_extras() const { return y0 >= 0 && z0 >= 0; }
};

SubNetworkStack make_stack(ParameterStore& store, int dim, int steps, std::uint64_t seed,
                           Activation activation, bool forward_extras);

// ---------------------------------------------------------------------------
// Recorded differentiable computation over per-path batches. Node values are
// M x k matrices (rows = paths). Recording evaluates eagerly so intermediate
// values (e.g. continuation values at an exercise date) can be inspected while
// building the graph; forward() re-evaluates the same graph from the current
// parameter values, which is what the finite-difference checks rely on.
// ---------------------------------------------------------------------------

struct Var {
    int id = -1;
};

class Tape {
  public:
    explicit Tape(ParameterStore& store) : store_(&store) {}

    // Rewinds the tape for the next recording. Node buffers are kept and
    // reused slot by slot, so re-recording an identically shaped graph does
    // not allocate (training loops record the same graph every iteration).
    void reset() { live_ = 0; }

    Var constant(const Matrix& v);
    Var constant(Matrix&& v);
    Var param(ParamId id);
    // 1 x k -> rows x k (also used to spread a scalar mean over paths).
    Var broadcast(Var a, int rows);
    Var affine(Var x, ParamId w, ParamId b);
    Var activation(Var a, Activation act);
    Var add(Var a, Var b);
    Var sub(Var a, Var b);
    Var mul(Var a, Var b);
    Var div(Var a, Var b);
    Var scale(Var a, double c);
    Var row_sum(Var a);  // M x d -> M x 1
    Var square(Var a);
    Var mean_all(Var a);  // -> 1 x 1
    // Frozen-branch select: rows where take_first is true come from `first`
    // and gradient flows only through the chosen branch.
    Var select(const std::vector<unsigned char>& take_first, Var first, Var second);

    Var net_forward(const SubNetwork& net, Var x);

    const Matrix& value(Var v) const { return nodes_[v.id].value; }
    double scalar(Var v) const { return nodes_[v.id].value(0, 0); }
    int size() const { return live_; }

    // Re-evaluates every node from the leaves using current parameter values.
    void forward();
    // Reverse sweep from `loss` (1x1); accumulates into the store's gradient
    // buffers (which are zeroed first). Node buffers are released as the sweep
    // passes them, so peak memory is the forward activations.
    void backward(Var loss);

    ParameterStore& store() { return *store_; }

  private:
    enum class Op {
        constant,
        param,
        broadcast,
        affine,
        tanh,
        relu,
        add,
        sub,
        mul,
        div,
        scale,
        row_sum,
        square,
        mean_all,
        select,
        net_apply
    };

    struct Node {
        Op op = Op::constant;
        int a = -1;
        int b = -1;
        ParamId pw = -1;
        ParamId pb = -1;
        double c = 0.0;
        std::vector<unsigned char> mask;
        SubNetwork net;  // net_apply only
        Matrix value;
        Matrix grad;
        bool grad_live = false;
    };

    Node& next_slot();
    Var finish(Node& n);
    void eval(Node& n);
    void eval_net(Node& n);
    void backward_net(Node& n);
    bool wants_grad(int idx) const;
    // Evaluates the expression straight into the (pooled) gradient buffer.
    template <typename Expr>
    void add_grad(Node& t, const Expr& inc) {
        if (!t.grad_live) {
            t.grad = inc;
            t.grad_live = true;
        } else {
            t.grad += inc;
        }
    }

    ParameterStore* store_;
    std::vector<Node> nodes_;
    int live_ = 0;  // nodes in use; slots beyond keep their buffers for reuse
    // Blockwise scratch for the fused network op (kept across iterations).
    std::vector<Matrix> scratch_;
};

// Computes d(loss)/d(theta) for every parameter block by reverse-mode
// differentiation of the recorded computation.
void compute_gradients(Tape& tape, Var loss);

// Standard bias-corrected Adam.
struct AdamState {
    double learning_rate = 5e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    long step_count = 0;
    std::vector<Matrix> first_moment;
    std::vector<Matrix> second_moment;

    explicit AdamState(const ParameterStore& store, double lr = 5e-3);
};

void adam_update(ParameterStore& store, AdamState& state);

}  // namespace fbsde
