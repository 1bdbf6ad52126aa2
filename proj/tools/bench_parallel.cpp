// Compares the serial and OpenMP paths of the heavy kernels and checks that
// the fixed-order reductions keep results bit-identical.
#include <chrono>
#include <cstdio>
#include <random>

#include "vtnav/config.hpp"
#include "vtnav/kinmodel.hpp"
#include "vtnav/plant.hpp"
#include "vtnav/sim.hpp"

using namespace vtnav;

namespace {

double now() {
    return std::chrono::duration<double>(
               std::chrono::steady_clock::now().time_since_epoch())
        .count();
}

}  // namespace

int main() {
    ScenarioConfig config = default_config();
    config.collect.episodes_per_variant = 4;
    config.collect.steps = 400;
    config.training.epochs = 1;

    std::printf("%-28s %10s %10s %8s %s\n", "kernel", "serial[s]", "openmp[s]", "speedup",
                "identical");

    // Dataset generation
    const auto plant_configs = [&] {
        std::vector<PlantConfig> out;
        for (const CollectVariant& v : config.collect.variants) {
            PlantConfig pc = config.plant;
            pc.geom = config.geometry;
            pc.trailer_kind = v.kind;
            pc.payload_mass = v.payload;
            out.push_back(pc);
        }
        return out;
    }();
    double t0 = now();
    const auto ds_serial =
        generate_dataset(plant_configs, config.collect.episodes_per_variant,
                         config.collect.steps, config.dt, config.seed,
                         config.collect.min_steps, false);
    double t1 = now();
    const auto ds_parallel =
        generate_dataset(plant_configs, config.collect.episodes_per_variant,
                         config.collect.steps, config.dt, config.seed,
                         config.collect.min_steps, true);
    double t2 = now();
    bool same = ds_serial.size() == ds_parallel.size();
    for (std::size_t i = 0; same && i < ds_serial.size(); ++i) {
        const auto& a = ds_serial[i].trajectory.states;
        const auto& b = ds_parallel[i].trajectory.states;
        same = a.size() == b.size();
        for (std::size_t j = 0; same && j < a.size(); ++j) {
            same = a[j].xf.x == b[j].xf.x && a[j].omega_zeta == b[j].omega_zeta;
        }
    }
    std::printf("%-28s %10.3f %10.3f %7.2fx %s\n", "generate_dataset", t1 - t0, t2 - t1,
                (t1 - t0) / (t2 - t1), same ? "yes" : "NO");

    // Training epoch
    std::vector<TrainingSample> samples;
    for (const auto& e : ds_serial) {
        auto s = extract_samples(e.trajectory, config.model.n_f, config.model.N,
                                 config.training.sample_stride);
        samples.insert(samples.end(), s.begin(), s.end());
    }
    std::mt19937_64 rng(config.seed);
    HybridModel model_a = make_model(config, rng);
    fit_normalizer(model_a.nominal_net, samples, config.model.n_f);
    HybridModel model_b = model_a;

    AdamState adam_a(model_a.nominal_net.param_count());
    AdamState adam_b = adam_a;
    t0 = now();
    const double loss_a = train_nominal_epoch(samples, model_a, adam_a, config.model.N,
                                              config.training.batch_size, false);
    t1 = now();
    const double loss_b = train_nominal_epoch(samples, model_b, adam_b, config.model.N,
                                              config.training.batch_size, true);
    t2 = now();
    std::vector<double> pa, pb;
    model_a.nominal_net.params_to(pa);
    model_b.nominal_net.params_to(pb);
    same = loss_a == loss_b && pa == pb;
    std::printf("%-28s %10.3f %10.3f %7.2fx %s\n", "train_nominal_epoch", t1 - t0, t2 - t1,
                (t1 - t0) / (t2 - t1), same ? "yes" : "NO");

    // Validation loss
    t0 = now();
    const double v_a = rolling_validation_loss(samples, model_a, config.model.N, false);
    t1 = now();
    const double v_b = rolling_validation_loss(samples, model_a, config.model.N, true);
    t2 = now();
    same = v_a == v_b;
    std::printf("%-28s %10.3f %10.3f %7.2fx %s\n", "rolling_validation_loss", t1 - t0,
                t2 - t1, (t1 - t0) / (t2 - t1), same ? "yes" : "NO");
    return 0;
}
