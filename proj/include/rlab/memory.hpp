// Memory-augmented reward estimation: a per-user GRU memory, a learned
// reward head over [state; action; memory], discounted shaped returns, and
// an LRU-bounded store of user memories.
#pragma once

#include <cstdint>
#include <list>
#include <unordered_map>
#include <vector>

#include "rlab/adam.hpp"
#include "rlab/common.hpp"
#include "rlab/config.hpp"
#include "rlab/nn.hpp"
#include "rlab/rng.hpp"

namespace rlab {

inline constexpr std::size_t kEstimatorHidden = 32;

struct UserMemory {
    Vec m;
    std::uint64_t user_id = 0;
    std::int64_t last_update_step = -1;
};

struct RewardEstimatorParams {
    Gru gru;   // input [s; one-hot(a)] (d_s + 2), hidden d_m
    Mlp head;  // [s; one-hot(a); m] -> 32 -> 1

    RewardEstimatorParams() = default;
    RewardEstimatorParams(std::size_t d_s, std::size_t d_m, Rng& rng)
        : gru(d_s + 2, d_m, rng), head({d_s + 2 + d_m, kEstimatorHidden, 1}, rng) {}
};

inline Vec action_one_hot(Arm a) { return a == Arm::A ? Vec{1.0, 0.0} : Vec{0.0, 1.0}; }

// m' = GRU(m, [s; one-hot(a)]); pure, the returned record carries `step`.
inline UserMemory update_memory(const RewardEstimatorParams& params, const UserMemory& mem,
                                const Vec& s, Arm a, std::int64_t step) {
    require_dim(mem.m, params.gru.hidden_dim, "update_memory memory");
    Vec onehot = action_one_hot(a);
    Vec x = concat({&s, &onehot});
    require_dim(x, params.gru.input_dim, "update_memory state-action input");
    UserMemory out;
    out.user_id = mem.user_id;
    out.last_update_step = step;
    out.m = gru_apply(params.gru, mem.m, x);
    return out;
}

inline double estimate_reward(const RewardEstimatorParams& params, const Vec& s, Arm a,
                              const Vec& m) {
    require_dim(m, params.gru.hidden_dim, "estimate_reward memory");
    Vec onehot = action_one_hot(a);
    Vec x = concat({&s, &onehot, &m});
    require_dim(x, params.head.input_dim(), "estimate_reward head input");
    return mlp_apply(params.head, x)[0];
}

// Backpropagates `upstream` through the head; returns r̃ and splits the input
// gradient into the state and memory blocks on request.
inline double estimate_reward_grad(const RewardEstimatorParams& params, const Vec& s, Arm a,
                                   const Vec& m, double upstream, Mlp& head_grads,
                                   Vec* ds = nullptr, Vec* dm = nullptr) {
    require_dim(m, params.gru.hidden_dim, "estimate_reward memory");
    Vec onehot = action_one_hot(a);
    Vec x = concat({&s, &onehot, &m});
    MlpCache cache;
    double r = mlp_apply(params.head, x, &cache)[0];
    Vec dx = mlp_grad(params.head, cache, Vec{upstream}, head_grads);
    if (ds) ds->assign(dx.begin(), dx.begin() + static_cast<std::ptrdiff_t>(s.size()));
    if (dm) dm->assign(dx.end() - static_cast<std::ptrdiff_t>(m.size()), dx.end());
    return r;
}

// R_t = sum_k gamma^k r̃_{t+k} by backward recursion (exact).
inline Vec memory_return(double gamma, const Vec& shaped) {
    if (!(gamma > 0.0 && gamma <= 1.0)) throw ContractError("memory_return: gamma must be in (0, 1]");
    Vec out(shaped.size());
    double acc = 0.0;
    for (std::size_t r = shaped.size(); r-- > 0;) {
        acc = shaped[r] + gamma * acc;
        out[r] = acc;
    }
    return out;
}

// ------------------------------------------------------------ memory store

class MemoryStore {
  public:
    MemoryStore(std::size_t capacity, std::size_t d_m) : cap_(capacity), d_m_(d_m) {
        if (capacity == 0) throw ContractError("MemoryStore capacity must be positive");
    }

    std::size_t size() const { return map_.size(); }
    std::size_t capacity() const { return cap_; }
    std::size_t dim() const { return d_m_; }

    // unknown or evicted users read as a fresh zero memory
    UserMemory lookup(std::uint64_t user_id) const {
        auto it = map_.find(user_id);
        if (it == map_.end()) return UserMemory{Vec(d_m_, 0.0), user_id, -1};
        return it->second.mem;
    }

    bool contains(std::uint64_t user_id) const { return map_.count(user_id) != 0; }

    void put(UserMemory mem) {
        require_dim(mem.m, d_m_, "MemoryStore entry");
        auto it = map_.find(mem.user_id);
        if (it != map_.end()) {
            order_.erase(it->second.pos);
            order_.push_back(mem.user_id);
            it->second.pos = std::prev(order_.end());
            it->second.mem = std::move(mem);
            return;
        }
        if (map_.size() >= cap_) {
            std::uint64_t victim = order_.front();
            order_.pop_front();
            map_.erase(victim);
        }
        order_.push_back(mem.user_id);
        Entry e{std::prev(order_.end()), std::move(mem)};
        map_.emplace(e.mem.user_id, std::move(e));
    }

    // least-recently-updated first; deterministic order for serialization
    template <class F>
    void for_each_lru(F&& f) const {
        for (std::uint64_t id : order_) f(map_.at(id).mem);
    }

    void clear() {
        map_.clear();
        order_.clear();
    }

  private:
    struct Entry {
        std::list<std::uint64_t>::iterator pos;
        UserMemory mem;
    };
    std::size_t cap_, d_m_;
    std::list<std::uint64_t> order_;
    std::unordered_map<std::uint64_t, Entry> map_;
};

// ---------------------------------------------------------------- training

struct EstimatorSample {
    Vec s;
    Arm a = Arm::A;
    Vec m;
    double target = 0.0;  // realized discounted return
};

inline double estimator_dataset_loss(const RewardEstimatorParams& params,
                                     const std::vector<EstimatorSample>& data) {
    double loss = 0.0;
    for (const auto& d : data) {
        double err = estimate_reward(params, d.s, d.a, d.m) - d.target;
        loss += err * err / static_cast<double>(data.size());
    }
    return loss;
}

// Squared-error regression of the head on realized returns; the GRU stays
// fixed (echo-state recurrence). Keeps the best epoch, so the returned
// parameters never lose to the initial ones on the training set.
inline Vec train_estimator(RewardEstimatorParams& params, const std::vector<EstimatorSample>& data,
                           int epochs, double lr, int minibatch, Rng& rng) {
    if (data.empty()) throw ContractError("train_estimator: empty dataset");
    if (epochs < 1 || minibatch < 1) throw ContractError("train_estimator: bad epochs/minibatch");

    Vec curve;
    curve.push_back(estimator_dataset_loss(params, data));
    Mlp best_head = params.head;
    double best_loss = curve[0];

    AdamState opt(params.head.param_count(), lr);
    std::vector<std::size_t> order(data.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    for (int e = 0; e < epochs; ++e) {
        for (std::size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1], order[rng.uniform_int(i)]);
        for (std::size_t lo = 0; lo < order.size(); lo += static_cast<std::size_t>(minibatch)) {
            const std::size_t hi =
                std::min(lo + static_cast<std::size_t>(minibatch), order.size());
            Mlp grads = zeros_like(params.head);
            const double inv_n = 1.0 / static_cast<double>(hi - lo);
            for (std::size_t k = lo; k < hi; ++k) {
                const EstimatorSample& d = data[order[k]];
                Vec onehot = action_one_hot(d.a);
                Vec x = concat({&d.s, &onehot, &d.m});
                MlpCache cache;
                double r = mlp_apply(params.head, x, &cache)[0];
                mlp_grad(params.head, cache, Vec{2.0 * (r - d.target) * inv_n}, grads);
            }
            adam_update(opt, params.head, grads);
        }
        double loss = estimator_dataset_loss(params, data);
        if (!std::isfinite(loss))
            throw TrainingAborted("reward estimator loss became non-finite at epoch " +
                                  std::to_string(e));
        curve.push_back(loss);
        if (loss < best_loss) {
            best_loss = loss;
            best_head = params.head;
        }
    }
    params.head = best_head;
    return curve;
}

}  // namespace rlab
