#ifndef VTNAV_NET_HPP
#define VTNAV_NET_HPP

#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace vtnav {

/// Dense feed-forward network: tanh hidden layers, linear scalar output,
/// per-feature input standardization folded into the first layer's chain rule.
struct MlpNetwork {
    std::vector<int> layer_sizes;                 // input, hidden..., 1
    std::vector<std::vector<double>> weights;     // per layer, row-major [out x in]
    std::vector<std::vector<double>> biases;      // per layer [out]
    std::vector<double> norm_mean;                // per input feature
    std::vector<double> norm_scale;               // per input feature, > 0

    int input_size() const { return layer_sizes.front(); }
    int layer_count() const { return static_cast<int>(weights.size()); }
    std::size_t param_count() const;

    void params_to(std::vector<double>& flat) const;
    void params_from(const std::vector<double>& flat);
};

/// Xavier-style uniform init, identity normalizer.
MlpNetwork make_network(const std::vector<int>& layer_sizes, std::mt19937_64& rng);

/// Intermediate activations from one forward pass, consumed by backward().
struct ForwardCache {
    std::vector<double> normalized_input;
    std::vector<std::vector<double>> activations;  // post-nonlinearity per layer
    double output{0.0};
};

double forward(const MlpNetwork& net, const std::vector<double>& input);
ForwardCache forward_cached(const MlpNetwork& net, const std::vector<double>& input);

/// Accumulates upstream * d(output)/d(param) into grad (flat layout of params_to).
void backward(const MlpNetwork& net, const ForwardCache& cache, double upstream,
              std::vector<double>& grad);

/// d(output)/d(input), through the normalizer.
std::vector<double> input_jacobian(const MlpNetwork& net, const std::vector<double>& input);

/// Input gradient for an already-computed cache; accumulates upstream * jacobian
/// into grad_input and optionally upstream * param-gradients into grad_params.
void backward_full(const MlpNetwork& net, const ForwardCache& cache, double upstream,
                   std::vector<double>* grad_params, std::vector<double>* grad_input);

/// Adam optimizer state with an exponential per-epoch learning-rate schedule.
struct AdamState {
    std::size_t step{0};
    std::vector<double> m;  // first moments, flat
    std::vector<double> v;  // second moments, flat
    double lr_initial{1e-2};
    double lr_final{1e-5};
    int decay_epochs{100};
    double lr{1e-2};  // active rate, set via set_epoch or directly
    double beta1{0.9};
    double beta2{0.999};
    double eps{1e-8};

    explicit AdamState(std::size_t n_params = 0)
        : m(n_params, 0.0), v(n_params, 0.0) {}

    /// lr = initial * (final/initial)^(epoch/decay_epochs), clamped at final.
    void set_epoch(int epoch);
};

/// Standard Adam update with bias correction; params and grads must match moments.
void adam_step(std::vector<double>& params, const std::vector<double>& grads, AdamState& adam);

/// Versioned text blob; round-trips forward outputs bitwise.
std::string serialize(const MlpNetwork& net);
MlpNetwork deserialize(const std::string& blob);

void save_network(const MlpNetwork& net, const std::string& path);
MlpNetwork load_network(const std::string& path);

}  // namespace vtnav

#endif  // VTNAV_NET_HPP
