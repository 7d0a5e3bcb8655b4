import sys

from voxshift import run_vox_shift


def main() -> None:
    """
    Main entry point for `python -m voxshift`.
    """
    sys.exit(run_vox_shift())


if __name__ == "__main__":
    main()
