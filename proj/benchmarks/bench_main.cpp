#include <benchmark/benchmark.h>

#include "iontrap/constants.hpp"
#include "iontrap/crystal.hpp"
#include "iontrap/electrostatics.hpp"
#include "iontrap/layout_design.hpp"
#include "iontrap/presets.hpp"
#include "iontrap/spectroscopy.hpp"

using namespace iontrap;

namespace {

const Preset& preset() { return get_preset("paper-2012"); }

void BM_PatchField(benchmark::State& state) {
  const RectPatch r{-50e-6, 70e-6, -30e-6, 40e-6};
  Vec3 p(10e-6, 5e-6, 120e-6);
  for (auto _ : state) {
    benchmark::DoNotOptimize(patch_field(r, 1.0, p));
    p.x() += 1e-12;
  }
}
BENCHMARK(BM_PatchField);

void BM_TrapEnergyHessian(benchmark::State& state) {
  const TrapLayout layout = build_five_wire(FiveWireGeometry{}, preset().drive);
  const Vec3 p(0.0, 0.0, preset().trap_height);
  for (auto _ : state) benchmark::DoNotOptimize(trap_energy_hessian(layout, preset().species, p));
}
BENCHMARK(BM_TrapEnergyHessian);

void BM_Characterize(benchmark::State& state) {
  const TrapLayout layout = build_five_wire(FiveWireGeometry{}, preset().drive);
  CharacterizeOptions opt;
  opt.compute_depth = false;
  for (auto _ : state) benchmark::DoNotOptimize(characterize(layout, preset().species, opt));
}
BENCHMARK(BM_Characterize)->Unit(benchmark::kMillisecond);

void BM_ChainEquilibrium(benchmark::State& state) {
  const auto model = AxialPotentialModel::harmonic(preset().species, units::angular(200e3));
  const auto n = static_cast<std::size_t>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(equilibrium(n, model, preset().species));
}
BENCHMARK(BM_ChainEquilibrium)->Arg(5)->Arg(23)->Arg(100)->Unit(benchmark::kMicrosecond);

void BM_SpectrumSynthesis(benchmark::State& state) {
  const Preset& p = preset();
  const double w = p.drive.angular_frequency;
  const std::vector<double> grid = detuning_grid(8.0 * w, 0.01 * w);
  SpectrumOptions o;
  o.resolution = p.resolution;
  for (auto _ : state) {
    benchmark::DoNotOptimize(synthesize_spectrum(1.0, p.probe, p.cavity, p.species, w, grid, o));
  }
}
BENCHMARK(BM_SpectrumSynthesis)->Unit(benchmark::kMicrosecond);

}  // namespace

BENCHMARK_MAIN();
