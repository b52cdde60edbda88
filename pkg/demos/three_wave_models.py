"""Seven analysis models on the same three-wave trials.

With a second follow-up, the analyst chooses which waves to use and how to
model the trajectory. Fitting all seven candidates to shared datasets shows
two regimes: when the first-stage effect reaches the final wave only through
the intermediate outcome, the early-wave models dominate; when part of the
effect is direct (delayed), the final wave becomes indispensable.
"""
from smartb import GenParamsThreeWave, estimate_power_multi
from smartb.experiments import TABLE5_MODELS

reps, n = 400, 300

for delayed in (False, True):
    gen = GenParamsThreeWave(delayed=delayed)
    estimates = estimate_power_multi(gen, TABLE5_MODELS, n=n, reps=reps,
                                     seed=(23, int(delayed)))
    print(f"delayed={delayed}  (n={n}, {reps} replicates)")
    for name, _ in TABLE5_MODELS:
        print(f"  {name:28s} {estimates[name].power:.3f}")
    print()

print("The trajectory model with independence working structure reproduces")
print("the final-wave-only analysis exactly; the correlated structures trade")
print("a little robustness for a little power.")
