"""Object-centric voxel grids and a discretized two-arm action space.

Subpackage map:

- ``geometry``: poses, camera intrinsics, rotation bins
- ``rgbd``: RGB-D frame IO and deprojection to point clouds
- ``voxel``: grid specs, fusion, and object-centric cropping
- ``actions``: value maps, labels, argmax decoding, loss stack
- ``roles``: arm-role assignment and crop-fraction selection
- ``detector``: client for the detect/segment service, with fixtures
- ``demos``: episode schema, keyframing, SE(3) augmentation
- ``policy``: nearest-neighbor baseline and checkpoint selection
- ``toyworld``: synthetic desk-scale scenes, renderer, demo scripts
- ``harness``: keyframe metrics, success predicates, episode rollout
- ``reporting``: JSON/CSV reports and matplotlib figures
- ``cli``: the ``voxact`` command-line entry point
"""

__version__ = "0.1.0"
