"""Compare rate-accuracy curves with the BD-rate summary: the average
rate difference, in percent, over the accuracy range both curves cover."""

from vcbench import RateAccuracyCurve, RatePoint, bd_rate
from vcbench.errors import CurveMonotonicityError, CurveOverlapError


def curve(label, rates, accuracies):
    qps = [40, 28, 16, 4]
    return RateAccuracyCurve(
        label, [RatePoint(q, r, a) for q, r, a in zip(qps, rates, accuracies)]
    )


anchor = curve("anchor", [100.0, 200.0, 400.0, 800.0], [0.40, 0.60, 0.80, 0.90])

# same accuracy at half the rate: 50 percent cheaper everywhere
half = curve("half-rate", [50.0, 100.0, 200.0, 400.0], [0.40, 0.60, 0.80, 0.90])
print(f"half the rate        -> {bd_rate(anchor, half):8.2f} %")

# a realistic challenger: cheaper at the low end, closer at the top
challenger = curve("challenger", [80.0, 150.0, 350.0, 700.0], [0.40, 0.60, 0.80, 0.90])
print(f"mixed improvement    -> {bd_rate(anchor, challenger):8.2f} %")

# the sign flips when the roles swap
print(f"roles swapped        -> {bd_rate(challenger, anchor):8.2f} %")

# curves must share accuracy range and have strictly increasing accuracy;
# violations raise instead of producing a silent nonsense number
low = curve("low", [10.0, 20.0, 30.0, 40.0], [0.05, 0.10, 0.15, 0.20])
try:
    bd_rate(anchor, low)
except CurveOverlapError as exc:
    print(f"disjoint ranges      -> {exc}")

flat = curve("flat", [10.0, 20.0, 30.0, 40.0], [0.50, 0.50, 0.50, 0.50])
try:
    bd_rate(anchor, flat)
except CurveMonotonicityError as exc:
    print(f"flat accuracy        -> {exc}")
