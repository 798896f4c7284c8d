"""Regenerate the golden format fixtures. Run from the repository root.

The fixtures are checked in; the tests only re-encode them and compare bytes.
"""

from pathlib import Path

from golden import golden_field, golden_manifest, golden_masks
from pisa import maskio

HERE = Path(__file__).parent


def main():
    maskio.write_mask_sequence(golden_masks(), HERE / "golden.pmsk")
    maskio.write_field_sequence(golden_field(), HERE / "golden.pfld")
    maskio.write_manifest(golden_manifest(), HERE / "golden_manifest.txt")


if __name__ == "__main__":
    main()
