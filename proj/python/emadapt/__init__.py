"""Active domain adaptation toolkit for EM membrane segmentation."""

import json

from ._core import (
    EmadaptError,
    __version__,
    cluster,
    fowlkes_mallows,
    mann_whitney_u,
    mmd2,
    permutation_test_fm,
    plan_budget,
    run_cli,
    seeded_watershed,
    variation_of_information,
)
from ._core import generate_sample as _generate_sample

__all__ = [
    "EmadaptError",
    "__version__",
    "cluster",
    "fowlkes_mallows",
    "generate_sample",
    "main",
    "mann_whitney_u",
    "mmd2",
    "permutation_test_fm",
    "plan_budget",
    "run_cli",
    "seeded_watershed",
    "variation_of_information",
]


def generate_sample(spec=None, index=0):
    """Return (id, image, labels, artifact flags) for one synthetic sample.

    `spec` is a dict of DomainSpec fields; missing keys keep their defaults.
    """
    return _generate_sample(json.dumps(spec or {}), index)


def main(argv=None):
    import sys

    code, out, err = run_cli(list(sys.argv[1:] if argv is None else argv))
    sys.stdout.write(out)
    sys.stderr.write(err)
    return code
