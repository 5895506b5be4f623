"""
Where in k-space the motion happens decides what the artifact looks like
========================================================================

Inconsistency near the k-space center smears low frequencies (blurring,
ghosting); inconsistency far from the center rings.  Two experiments on
the standard phantom make that concrete:

1. A fixed pose applied at different phase-encode distances from the
   center, splitting the corruption energy into low/high frequency bands.
2. A fixed-width burst of motion slid across the acquisition, tracking
   the foreground percentage error it causes.

Run from the repository root:  python3 demos/02_artifact_phenomenology.py
"""

import numpy as np

from mrimotion.metrics import percentage_error
from mrimotion.motion import (
    MotionTrajectory,
    RigidMotion,
    TrajectorySegment,
    corrupt,
    error_band_shares,
)
from mrimotion.phantom import generate, standard_spec
from mrimotion.preprocess import estimate_foreground

dims = (40, 40, 40)
n_pe = dims[0]
center = n_pe // 2
clean = generate(standard_spec(), dims, name="standard")
fg = estimate_foreground(clean)
pose = RigidMotion(translation=(1.5, -1.0, 0.5), rotation=(2.0, -1.5, 1.0))

# ------------------------------------------------------------------
# Experiment 1: one persistent pose change.  Every line from the onset
# to the end of the acquisition is corrupted, so an onset just past the
# center line hits the low frequencies while a late onset only touches
# the outer lines.  The low band covers center distance <= n_pe/4.
print("pose onset vs corruption band split")
print(f"{'onset':>6} {'onset-center':>13} {'low share':>10} {'high share':>11}")
for onset in (36, 32, 28, 24, 22):
    traj = MotionTrajectory(
        (TrajectorySegment(0, RigidMotion()), TrajectorySegment(onset, pose)),
        n_pe=n_pe)
    k, _ = corrupt(clean, traj)
    low, high = error_band_shares(clean, k)
    print(f"{onset:>6} {onset - center:>13} {low:>10.3f} {high:>11.3f}")
print("a late onset corrupts only outer lines (ringing); an onset just")
print("past the center puts the majority of the energy in the low band.\n")

# ------------------------------------------------------------------
# Experiment 2: an 8-line burst (pose on, then back to identity) slid
# across the acquisition.  Total moved lines stay constant, so the error
# profile isolates the position effect.
width = 8
print("burst position vs foreground percentage error")
print(f"{'start':>6} {'burst center':>13} {'error %':>8}")
errors, dists = [], []
for start in range(2, n_pe - width, 5):
    traj = MotionTrajectory(
        (TrajectorySegment(0, RigidMotion()),
         TrajectorySegment(start, pose),
         TrajectorySegment(start + width, RigidMotion())),
        n_pe=n_pe)
    _, corrupted = corrupt(clean, traj)
    err = percentage_error(corrupted.data * fg.bool_array, clean, fg)
    errors.append(err)
    dists.append(abs(start + width / 2 - center))
    print(f"{start:>6} {start + width / 2:>13.1f} {err:>8.2f}")

worst = int(np.argmax(errors))
print(f"\nerror peaks at burst center {2 + 5 * worst + width / 2:.1f} "
      f"(center line is {center}); the same amount of motion is far more")
print("damaging when it hits the middle of k-space.")
