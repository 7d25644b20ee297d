// Generates a small synthetic workload, selects training sets for its scarce
// first domain with each method and prints the oracle-matcher test F1.

#include <cstdio>

#include "beacon/beacon.hpp"

using namespace beacon;

int main() {
  synth::SynthConfig cfg;
  cfg.target_train = 40;
  cfg.target_validation = 40;
  const auto w = synth::generate(cfg);
  const Budget budget(400);

  std::printf("target %s: %zu train pairs, budget %zu\n", w.target().c_str(),
              w.pool.domain(w.target()).train.size(), budget.beta);
  for (const char* name : {"GEN", "SPEC", "NN", "TVDF", "KCG", "BEACON"}) {
    const auto strategy = synth::Strategy::parse(name);
    const double f1 = synth::evaluate(w, strategy, w.target(), budget, 0);
    std::printf("%-7s F1 %.3f\n", name, f1);
  }

  const auto plan = synth::select_plan(w, Method::KCG, w.target(), budget, 0);
  std::printf("KCG out-of-domain picks by source:\n");
  for (const auto& [dom, n] : synth::composition(plan, w.pool)) std::printf("  %s %zu\n", dom.c_str(), n);
}
