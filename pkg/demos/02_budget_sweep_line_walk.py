"""How the bound tightens with the simulation budget on a biased line walk.

Below a threshold budget the output is 1 (uninformative: no finite
relaxation-time bound can be certified); past it, the bound drops toward
the true second eigenvalue.  Uses the default split I = n/K, K = (ln n)^2,
delta = 1/sqrt(n).
"""

from specgap import (
    BiasedLineChain,
    RtfEngine,
    UniformSampler,
    config_for_budget,
    exact_spectrum,
    finalize_estimate,
    rtf_collect,
)

for bias in (0.5, 0.9):
    chain = BiasedLineChain(20, bias)
    lam_star = exact_spectrum(chain)[1]
    print(f"\nline walk |S|=20, bias={bias}: exact lambda_star={lam_star:.4f}, "
          f"t_r={1 / (1 - lam_star):.1f}")
    print(f"{'n':>10} {'I':>7} {'K':>5} {'bound':>9} {'t_r bound':>11}")
    for n in (10**4, 10**5, 10**6):
        cfg = config_for_budget(n, 20)
        engine = RtfEngine(chain, UniformSampler(20), cfg, master_seed=0)
        est = finalize_estimate(rtf_collect(engine), cfg)
        t_r = f"{est.relaxation_upper:.1f}" if est.informative else "inf"
        print(f"{n:>10} {cfg.num_paths:>7} {cfg.max_path_length:>5} "
              f"{est.ell_star:>9.4f} {t_r:>11}")

print("\nA fast-mixing chain (bias 0.9) becomes informative at a much smaller "
      "budget than the slow one (bias 0.5); both bounds stay above the truth.")
