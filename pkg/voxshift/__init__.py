from voxshift.vox_shift import run_vox_shift

__all__ = [
    "run_vox_shift",
]
