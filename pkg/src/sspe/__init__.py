"""Desk-scale 6DoF object pose estimation toolkit.

Modules: geometry (quaternions, transforms, projection), models (point
clouds, FPS keypoints), simulator (synthetic direction-vector scenes),
baseline (voting + RANSAC-PnP), head (trainable pose estimator), metrics
(ADD family, cluster scores), cli (batch entry points).
"""

__version__ = "0.1.0"
