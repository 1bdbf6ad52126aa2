#include "vtnav/net.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace vtnav {

std::size_t MlpNetwork::param_count() const {
    std::size_t n = 0;
    for (int li = 0; li < layer_count(); ++li) {
        n += weights[li].size() + biases[li].size();
    }
    return n;
}

void MlpNetwork::params_to(std::vector<double>& flat) const {
    flat.clear();
    flat.reserve(param_count());
    for (int li = 0; li < layer_count(); ++li) {
        flat.insert(flat.end(), weights[li].begin(), weights[li].end());
        flat.insert(flat.end(), biases[li].begin(), biases[li].end());
    }
}

void MlpNetwork::params_from(const std::vector<double>& flat) {
    if (flat.size() != param_count()) {
        throw std::invalid_argument("params_from: size mismatch");
    }
    std::size_t p = 0;
    for (int li = 0; li < layer_count(); ++li) {
        for (double& w : weights[li]) w = flat[p++];
        for (double& b : biases[li]) b = flat[p++];
    }
}

MlpNetwork make_network(const std::vector<int>& layer_sizes, std::mt19937_64& rng) {
    if (layer_sizes.size() < 2 || layer_sizes.back() != 1) {
        throw std::invalid_argument("make_network: need input..hidden..1 layer sizes");
    }
    MlpNetwork net;
    net.layer_sizes = layer_sizes;
    net.norm_mean.assign(layer_sizes[0], 0.0);
    net.norm_scale.assign(layer_sizes[0], 1.0);
    for (std::size_t li = 1; li < layer_sizes.size(); ++li) {
        const int fan_in = layer_sizes[li - 1];
        const int fan_out = layer_sizes[li];
        const double bound = std::sqrt(6.0 / (fan_in + fan_out));
        std::uniform_real_distribution<double> dist(-bound, bound);
        std::vector<double> w(static_cast<std::size_t>(fan_out) * fan_in);
        for (double& x : w) x = dist(rng);
        net.weights.push_back(std::move(w));
        net.biases.emplace_back(fan_out, 0.0);
    }
    return net;
}

ForwardCache forward_cached(const MlpNetwork& net, const std::vector<double>& input) {
    if (static_cast<int>(input.size()) != net.input_size()) {
        throw std::invalid_argument("forward: input length mismatch");
    }
    ForwardCache cache;
    cache.normalized_input.resize(input.size());
    for (std::size_t i = 0; i < input.size(); ++i) {
        cache.normalized_input[i] = (input[i] - net.norm_mean[i]) / net.norm_scale[i];
    }
    const std::vector<double>* prev = &cache.normalized_input;
    cache.activations.resize(net.layer_count());
    for (int li = 0; li < net.layer_count(); ++li) {
        const int n_out = net.layer_sizes[li + 1];
        const int n_in = net.layer_sizes[li];
        auto& act = cache.activations[li];
        act.assign(n_out, 0.0);
        const double* w = net.weights[li].data();
        for (int o = 0; o < n_out; ++o) {
            double z = net.biases[li][o];
            const double* row = w + static_cast<std::size_t>(o) * n_in;
            for (int i = 0; i < n_in; ++i) z += row[i] * (*prev)[i];
            act[o] = (li + 1 < net.layer_count()) ? std::tanh(z) : z;
        }
        prev = &act;
    }
    cache.output = cache.activations.back()[0];
    return cache;
}

double forward(const MlpNetwork& net, const std::vector<double>& input) {
    return forward_cached(net, input).output;
}

void backward_full(const MlpNetwork& net, const ForwardCache& cache, double upstream,
                   std::vector<double>* grad_params, std::vector<double>* grad_input) {
    const int L = net.layer_count();
    // delta starts as d(output)/d(pre-activation) of the last (linear) layer.
    std::vector<double> delta{upstream};
    // Offsets of each layer's (weights, biases) in the flat parameter vector.
    std::vector<std::size_t> offsets(L, 0);
    if (grad_params) {
        std::size_t p = 0;
        for (int li = 0; li < L; ++li) {
            offsets[li] = p;
            p += net.weights[li].size() + net.biases[li].size();
        }
        if (grad_params->size() != p) grad_params->resize(p, 0.0);
    }
    for (int li = L - 1; li >= 0; --li) {
        const int n_out = net.layer_sizes[li + 1];
        const int n_in = net.layer_sizes[li];
        const std::vector<double>& in_act =
            (li == 0) ? cache.normalized_input : cache.activations[li - 1];
        if (grad_params) {
            double* gw = grad_params->data() + offsets[li];
            double* gb = gw + static_cast<std::size_t>(n_out) * n_in;
            for (int o = 0; o < n_out; ++o) {
                double* grow = gw + static_cast<std::size_t>(o) * n_in;
                for (int i = 0; i < n_in; ++i) grow[i] += delta[o] * in_act[i];
                gb[o] += delta[o];
            }
        }
        std::vector<double> prev_delta(n_in, 0.0);
        const double* w = net.weights[li].data();
        for (int o = 0; o < n_out; ++o) {
            const double* row = w + static_cast<std::size_t>(o) * n_in;
            for (int i = 0; i < n_in; ++i) prev_delta[i] += row[i] * delta[o];
        }
        if (li > 0) {
            // chain through tanh: a = tanh(z), da/dz = 1 - a^2
            const auto& a = cache.activations[li - 1];
            for (int i = 0; i < n_in; ++i) prev_delta[i] *= 1.0 - a[i] * a[i];
        }
        delta = std::move(prev_delta);
    }
    if (grad_input) {
        if (grad_input->size() != delta.size()) grad_input->resize(delta.size(), 0.0);
        for (std::size_t i = 0; i < delta.size(); ++i) {
            (*grad_input)[i] += delta[i] / net.norm_scale[i];
        }
    }
}

void backward(const MlpNetwork& net, const ForwardCache& cache, double upstream,
              std::vector<double>& grad) {
    backward_full(net, cache, upstream, &grad, nullptr);
}

std::vector<double> input_jacobian(const MlpNetwork& net, const std::vector<double>& input) {
    ForwardCache cache = forward_cached(net, input);
    std::vector<double> jac(net.input_size(), 0.0);
    backward_full(net, cache, 1.0, nullptr, &jac);
    return jac;
}

void AdamState::set_epoch(int epoch) {
    if (decay_epochs <= 0) {
        lr = lr_final;
        return;
    }
    const double frac = std::min(1.0, static_cast<double>(epoch) / decay_epochs);
    lr = lr_initial * std::pow(lr_final / lr_initial, frac);
}

void adam_step(std::vector<double>& params, const std::vector<double>& grads, AdamState& adam) {
    if (params.size() != grads.size() || params.size() != adam.m.size()) {
        throw std::invalid_argument("adam_step: shape mismatch");
    }
    adam.step += 1;
    const double bc1 = 1.0 - std::pow(adam.beta1, static_cast<double>(adam.step));
    const double bc2 = 1.0 - std::pow(adam.beta2, static_cast<double>(adam.step));
    for (std::size_t i = 0; i < params.size(); ++i) {
        adam.m[i] = adam.beta1 * adam.m[i] + (1.0 - adam.beta1) * grads[i];
        adam.v[i] = adam.beta2 * adam.v[i] + (1.0 - adam.beta2) * grads[i] * grads[i];
        const double mhat = adam.m[i] / bc1;
        const double vhat = adam.v[i] / bc2;
        params[i] -= adam.lr * mhat / (std::sqrt(vhat) + adam.eps);
    }
}

namespace {

constexpr const char* kMagic = "vtnav-mlp";
constexpr int kVersion = 1;

void emit_vector(std::ostringstream& os, const std::vector<double>& v) {
    for (double x : v) os << ' ' << x;
    os << '\n';
}

std::vector<double> read_vector(std::istringstream& is, std::size_t n, const char* what) {
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        if (!(is >> out[i])) {
            throw std::runtime_error(std::string("deserialize: truncated ") + what +
                                     " at element " + std::to_string(i));
        }
    }
    return out;
}

}  // namespace

std::string serialize(const MlpNetwork& net) {
    std::ostringstream os;
    os.precision(17);  // round-trips doubles exactly
    os << kMagic << ' ' << kVersion << '\n';
    os << "layers " << net.layer_sizes.size();
    for (int s : net.layer_sizes) os << ' ' << s;
    os << '\n';
    os << "norm_mean";
    emit_vector(os, net.norm_mean);
    os << "norm_scale";
    emit_vector(os, net.norm_scale);
    for (int li = 0; li < net.layer_count(); ++li) {
        os << "w" << li;
        emit_vector(os, net.weights[li]);
        os << "b" << li;
        emit_vector(os, net.biases[li]);
    }
    return os.str();
}

MlpNetwork deserialize(const std::string& blob) {
    std::istringstream is(blob);
    std::string magic;
    int version = -1;
    if (!(is >> magic >> version) || magic != kMagic) {
        throw std::runtime_error("deserialize: bad header");
    }
    if (version != kVersion) {
        throw std::runtime_error("deserialize: unsupported version " + std::to_string(version));
    }
    std::string tag;
    std::size_t n_layers = 0;
    if (!(is >> tag >> n_layers) || tag != "layers" || n_layers < 2) {
        throw std::runtime_error("deserialize: bad layer header");
    }
    MlpNetwork net;
    net.layer_sizes.resize(n_layers);
    for (std::size_t i = 0; i < n_layers; ++i) {
        if (!(is >> net.layer_sizes[i])) {
            throw std::runtime_error("deserialize: truncated layer sizes at " + std::to_string(i));
        }
    }
    auto expect_tag = [&is](const std::string& want) {
        std::string got;
        if (!(is >> got) || got != want) {
            throw std::runtime_error("deserialize: expected tag '" + want + "'");
        }
    };
    const std::size_t n_in = static_cast<std::size_t>(net.layer_sizes[0]);
    expect_tag("norm_mean");
    net.norm_mean = read_vector(is, n_in, "norm_mean");
    expect_tag("norm_scale");
    net.norm_scale = read_vector(is, n_in, "norm_scale");
    for (std::size_t li = 0; li + 1 < n_layers; ++li) {
        const std::size_t rows = static_cast<std::size_t>(net.layer_sizes[li + 1]);
        const std::size_t cols = static_cast<std::size_t>(net.layer_sizes[li]);
        expect_tag("w" + std::to_string(li));
        net.weights.push_back(read_vector(is, rows * cols, "weights"));
        expect_tag("b" + std::to_string(li));
        net.biases.push_back(read_vector(is, rows, "biases"));
    }
    return net;
}

void save_network(const MlpNetwork& net, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("save_network: cannot open " + path);
    f << serialize(net);
}

MlpNetwork load_network(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("load_network: cannot open " + path);
    std::ostringstream ss;
    ss << f.rdbuf();
    return deserialize(ss.str());
}

}  // namespace vtnav
