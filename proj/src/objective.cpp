#include "modforge/objective.hpp"

#include <algorithm>
#include <string>

#include "modforge/error.hpp"

namespace modforge {

namespace {

std::vector<std::size_t> count_modules(const std::vector<ModuleId>& assign, std::size_t k) {
    std::vector<std::size_t> counts(k, 0);
    for (ModuleId a : assign)
        if (a < k) ++counts[a];
    return counts;
}

double objective_from(double sum_w, double sum_p, double sum_inv_p, std::size_t k,
                      double* xi_out = nullptr, double* balance_out = nullptr) {
    const double xi = sum_w / sum_p;
    const double balance = static_cast<double>(k) / sum_inv_p;
    if (xi_out) *xi_out = xi;
    if (balance_out) *balance_out = balance;
    return xi * balance;
}

// Shared body of the two candidate evaluators. `size_moving` are the counts on
// the moving axis, `size_fixed` the counts on the other axis.
MoveDelta eval_move(const ObjectiveState& st, Axis kind, std::size_t element, ModuleId from,
                    ModuleId to, std::span<const double> sums,
                    const std::vector<std::size_t>& size_moving,
                    const std::vector<std::size_t>& size_fixed) {
    if (to >= st.K()) throw UsageError("target module out of range: " + std::to_string(to));
    MoveDelta d;
    d.kind = kind;
    d.element = element;
    d.from_module = from;
    d.to_module = to;
    d.sum_from = sums[from];
    d.sum_to = sums[to];
    d.state_version = st.version;

    if (from == to) {
        d.L_after = evaluate(st).L;
        return d;
    }
    if (size_moving[from] < 2) {
        d.valid = false;
        d.L_after = evaluate(st).L;
        return d;
    }

    const double na = static_cast<double>(size_moving[from]);
    const double nb = static_cast<double>(size_moving[to]);
    const double fa = static_cast<double>(size_fixed[from]);
    const double fb = static_cast<double>(size_fixed[to]);

    const double sum_w = st.sum_W - d.sum_from + d.sum_to;
    const double sum_p = st.sum_P - fa + fb;
    // 1/((na-1) fa) - 1/(na fa) = 1/(fa na (na-1));  1/((nb+1) fb) - 1/(nb fb) = -1/(fb nb (nb+1))
    const double sum_inv_p = st.sum_invP + 1.0 / (fa * na * (na - 1.0)) - 1.0 / (fb * nb * (nb + 1.0));
    d.L_after = objective_from(sum_w, sum_p, sum_inv_p, st.K());
    return d;
}

}  // namespace

void Partition::validate(std::size_t num_neurons, std::size_t num_samples) const {
    if (K == 0) throw ConstraintError("K must be positive");
    if (neuron_assign.size() != num_neurons)
        throw ConstraintError("neuron assignment has length " + std::to_string(neuron_assign.size()) +
                              ", expected " + std::to_string(num_neurons));
    if (sample_assign.size() != num_samples)
        throw ConstraintError("sample assignment has length " + std::to_string(sample_assign.size()) +
                              ", expected " + std::to_string(num_samples));
    if (K > num_neurons || K > num_samples)
        throw ConstraintError("K=" + std::to_string(K) + " exceeds min(N, M)");
    for (std::size_t i = 0; i < neuron_assign.size(); ++i)
        if (neuron_assign[i] >= K)
            throw ConstraintError("neuron " + std::to_string(i) + " assigned to module " +
                                  std::to_string(neuron_assign[i]) + " >= K");
    for (std::size_t j = 0; j < sample_assign.size(); ++j)
        if (sample_assign[j] >= K)
            throw ConstraintError("sample " + std::to_string(j) + " assigned to module " +
                                  std::to_string(sample_assign[j]) + " >= K");
    const auto nc = neuron_counts();
    const auto sc = sample_counts();
    for (std::size_t k = 0; k < K; ++k) {
        if (nc[k] == 0) throw ConstraintError("module " + std::to_string(k) + " has no neurons");
        if (sc[k] == 0) throw ConstraintError("module " + std::to_string(k) + " has no samples");
    }
}

std::vector<std::size_t> Partition::neuron_counts() const { return count_modules(neuron_assign, K); }
std::vector<std::size_t> Partition::sample_counts() const { return count_modules(sample_assign, K); }

ObjectiveState build_state(const DenseMatrix& a, const Partition& p) {
    p.validate(a.rows(), a.cols());
    ObjectiveState st;
    st.W.assign(p.K, 0.0);
    st.n = p.neuron_counts();
    st.m = p.sample_counts();
    for (std::size_t u = 0; u < a.rows(); ++u) {
        const ModuleId k = p.neuron_assign[u];
        const auto row = a.row(u);
        double acc = 0.0;
        for (std::size_t s = 0; s < row.size(); ++s)
            if (p.sample_assign[s] == k) acc += row[s];
        st.W[k] += acc;
    }
    for (std::size_t k = 0; k < p.K; ++k) {
        const double prod = static_cast<double>(st.n[k]) * static_cast<double>(st.m[k]);
        st.sum_W += st.W[k];
        st.sum_P += prod;
        st.sum_invP += 1.0 / prod;
    }
    return st;
}

ObjectiveValue evaluate(const ObjectiveState& state) {
    ObjectiveValue v;
    v.L = objective_from(state.sum_W, state.sum_P, state.sum_invP, state.K(), &v.xi, &v.balance);
    return v;
}

void neuron_module_sums(const DenseMatrix& a, const Partition& p, std::size_t u,
                        std::span<double> out) {
    std::fill(out.begin(), out.end(), 0.0);
    const auto row = a.row(u);
    for (std::size_t s = 0; s < row.size(); ++s) out[p.sample_assign[s]] += row[s];
}

void sample_module_sums(const DenseMatrix& a, const Partition& p, std::size_t s,
                        std::span<double> out) {
    std::fill(out.begin(), out.end(), 0.0);
    for (std::size_t u = 0; u < a.rows(); ++u) out[p.neuron_assign[u]] += a(u, s);
}

DenseMatrix all_neuron_module_sums(const DenseMatrix& a, const Partition& p) {
    DenseMatrix r(a.rows(), p.K);
    for (std::size_t u = 0; u < a.rows(); ++u) neuron_module_sums(a, p, u, r.row(u));
    return r;
}

DenseMatrix all_sample_module_sums(const DenseMatrix& a, const Partition& p) {
    DenseMatrix c(a.cols(), p.K);
    for (std::size_t u = 0; u < a.rows(); ++u) {
        const ModuleId k = p.neuron_assign[u];
        const auto row = a.row(u);
        for (std::size_t s = 0; s < row.size(); ++s) c(s, k) += row[s];
    }
    return c;
}

MoveDelta eval_neuron_move(const ObjectiveState& state, const Partition& p, std::size_t u,
                           ModuleId target, std::span<const double> row_sums) {
    return eval_move(state, Axis::neuron, u, p.neuron_assign[u], target, row_sums, state.n,
                     state.m);
}

MoveDelta eval_sample_move(const ObjectiveState& state, const Partition& p, std::size_t s,
                           ModuleId target, std::span<const double> col_sums) {
    return eval_move(state, Axis::sample, s, p.sample_assign[s], target, col_sums, state.m,
                     state.n);
}

MoveDelta eval_neuron_move(const ObjectiveState& state, const DenseMatrix& a,
                           const Partition& p, std::size_t u, ModuleId target) {
    std::vector<double> sums(p.K);
    neuron_module_sums(a, p, u, sums);
    return eval_neuron_move(state, p, u, target, sums);
}

MoveDelta eval_sample_move(const ObjectiveState& state, const DenseMatrix& a,
                           const Partition& p, std::size_t s, ModuleId target) {
    std::vector<double> sums(p.K);
    sample_module_sums(a, p, s, sums);
    return eval_sample_move(state, p, s, target, sums);
}

void commit_move(ObjectiveState& state, Partition& p, const MoveDelta& delta) {
    if (delta.state_version != state.version)
        throw Error("stale move delta: state changed since the move was evaluated");
    if (!delta.valid) throw ConstraintError("cannot commit a move that empties its module");

    auto& assign = delta.kind == Axis::neuron ? p.neuron_assign : p.sample_assign;
    if (delta.element >= assign.size() || assign[delta.element] != delta.from_module)
        throw Error("stale move delta: element is no longer in its source module");
    if (delta.from_module == delta.to_module) return;

    auto& moving = delta.kind == Axis::neuron ? state.n : state.m;
    const auto& fixed = delta.kind == Axis::neuron ? state.m : state.n;
    const ModuleId a = delta.from_module, b = delta.to_module;
    const double na = static_cast<double>(moving[a]);
    const double nb = static_cast<double>(moving[b]);
    const double fa = static_cast<double>(fixed[a]);
    const double fb = static_cast<double>(fixed[b]);

    state.W[a] -= delta.sum_from;
    state.W[b] += delta.sum_to;
    state.sum_W = state.sum_W - delta.sum_from + delta.sum_to;
    state.sum_P = state.sum_P - fa + fb;
    state.sum_invP = state.sum_invP + 1.0 / (fa * na * (na - 1.0)) - 1.0 / (fb * nb * (nb + 1.0));
    --moving[a];
    ++moving[b];
    assign[delta.element] = b;
    ++state.version;
}

}  // namespace modforge
