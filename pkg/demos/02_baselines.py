"""
Global and constrained maximum
==============================

Both baselines look for the brightest sample.  The constrained version only
searches a window around its previous estimate, sized from the spread of
its own history, which helps against isolated bright clutter but not
against a layer that is brighter than the ground for many scans.
"""
from gbtrack import bias_variance, simulate, track_constrained_max, track_global_max
from gbtrack.scenarios import outlier, snow

for name, cfg in [("one-cell outlier", outlier(0)), ("snow patch", snow(0))]:
    vol, truth, _ = simulate(cfg)
    print(name)
    for label, est in [("global max", track_global_max(vol)),
                       ("constrained max", track_constrained_max(vol))]:
        e = bias_variance(est, truth, start_scan=20)
        print(f"  {label:16s} bias {e.bias:+7.3f}  variance {e.variance:8.3f}")
