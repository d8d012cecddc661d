"""Smoke test for the triage_py extension. Run after building/installing it."""
import math
import tempfile

import triage_py as t

cohort = t.synthesize(657, seed=1)
assert len(cohort) == 657
train, val = t.split(cohort, 0.8, seed=1)
assert (len(train), len(val)) == (526, 131)
assert len(t.Cohort.from_csv(val.to_csv())) == 131

gold = [g for g in val.gold_ranks("french")]
nurse = val.nurse_ranks()
assert all(1 <= g <= 6 for g in gold)

mae, rmse = t.ordinal_error(gold, gold)
assert (mae, rmse) == (0.0, 0.0)
assert t.weighted_kappa(gold, gold) == 1.0
assert t.rank_correlation(gold, gold) == 1.0
assert t.ordinal_error([6], [1]) == (5.0, 5.0)
print("nurse kappa", round(t.weighted_kappa(nurse, gold), 3))

f1 = t.f1_scores([1, 2, 2], [1, 2, 3])
assert f1["per_class"][3] is None and f1["per_class"][2] == 0.0

auc, var, lo, hi = t.auc_delong([0.9, 0.4], [0.5, 0.1])
assert auc == 0.75 and lo <= auc <= hi

one_hot = [[1.0 if c == g - 1 else 0.0 for c in range(6)] for g in gold]
assert t.brier(one_hot, gold) == 0.0
uniform = [[1 / 6] * 6 for _ in gold]
assert abs(t.brier(uniform, gold) - 5 / 6) < 1e-12
assert abs(t.brier(uniform, gold, "mean") - 5 / 36) < 1e-12
aucs, macro = t.class_aucs(one_hot, gold)
assert all(a in (None, 1.0) for a in aucs) and macro == 1.0
rows = t.heatmap(one_hot, gold)
assert all(r is None or r[i] == 1.0 for i, r in enumerate(rows))
bins = t.calibration_table(uniform, gold, 4)
assert sum(b["positives"] for b in bins) == gold.count(4)

m = t.confusion(nurse, gold)
assert sum(map(sum, m)) == len(gold)
bias, sd, lower, upper = t.bland_altman(nurse, gold)
assert lower <= bias <= upper

table = [
    ("URGENTIAPARSE", 0.228, 0.790, 0.800, 0.802),
    ("EMERGINET", 0.401, 0.979, 0.560, 0.602),
    ("TRIAGEMASTER", 0.637, 1.180, 0.370, 0.005),
    ("nurse", 1.393, 1.834, 0.080, 0.024),
]
scores = t.composite_ranking(table)
assert scores[-1][0] == "gold"
assert abs(sum(s for _, s in scores)) < 1e-9
print("composite", [(p, round(s, 3)) for p, s in sorted(scores, key=lambda x: -x[1])])

try:
    t.weighted_kappa([1, 1], [1, 1])
except ArithmeticError:
    pass
else:
    raise AssertionError("constant marginals should raise")
try:
    t.ordinal_error([7], [1])
except ValueError:
    pass
else:
    raise AssertionError("out-of-range rank should raise")

config = """
processes = ["boosted", "nurse"]
[data]
synthetic_cases = 200
[boosted]
rounds = 20
"""
with tempfile.TemporaryDirectory() as a, tempfile.TemporaryDirectory() as b:
    first = t.evaluate_run(a, config, seed=4)
    second = t.evaluate_run(b, config, seed=4)
    assert first == second and any(p == "report.json" for p, _ in first)

assert math.isclose(t.auc_delong([1.0], [0.0])[0], 1.0)
print("smoke test passed")
