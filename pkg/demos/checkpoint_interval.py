"""How far apart should checkpoints be?

For each fault rate the model picks the number of verified chunks between
checkpoints.  The demo then measures the mean simulated time at a few
intervals around that choice.
"""

from abftcg.harness import Problem, model_interval, validate_model
from abftcg.sparse import generate_test_matrix

prob = Problem(generate_test_matrix("laplacian2d", 12))
for method in ("abft_detection", "abft_correction"):
    print(method)
    for alpha in (1 / 4, 1 / 16, 1 / 64):
        s, _, overhead = model_interval(prob, method, alpha)
        print(f"  alpha 1/{round(1 / alpha):<3d} model interval s={s:<4d} "
              f"expected time per iteration {overhead:.3f} (plain iteration = 1)")

rows, summary = validate_model(prob, "abft_detection", 1 / 16, [1, 2, 4, 8, 16], reps=40, seed=1)
print("\nmeasured at alpha 1/16 (40 runs per interval):")
for r in rows:
    mark = "  <- model" if r["s"] == summary["s_model"] else ""
    print(f"  s={r['s']:<3d} mean {r['mean_wall']:.2f}  95% CI [{r['ci_low']:.2f}, "
          f"{r['ci_high']:.2f}]{mark}")
print(f"loss of the model choice against the best measured: {summary['loss_pct']:.1f}%")
