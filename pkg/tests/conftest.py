import math

import numpy as np
import pytest

from lgetools import AngleRange, MvoCore, PhantomSpec, ScarWedge, Spacing, make_phantom


def standard_spacing() -> Spacing:
    return Spacing(dx=2.2, dy=1.6, slice_thickness=8.0, interslice_gap=2.0)


def small_phantom_spec(seed=0, noise_sd=0.0, with_mvo=False, dims=(64, 64, 8)):
    mvo = None
    if with_mvo:
        mvo = MvoCore(
            angles=AngleRange(math.pi / 12, math.pi / 6),
            radial_band=(11.5, 14.5),
            slice_range=(3, 5),
        )
    return PhantomSpec(
        dims=dims,
        spacing=standard_spacing(),
        inner_radius_px=10.0,
        outer_radius_px=16.0,
        center_px=((dims[0] - 1) / 2.0, (dims[1] - 1) / 2.0),
        scar_wedge=ScarWedge(angles=AngleRange(0.0, math.pi / 3), slice_range=(2, 6)),
        mvo_core=mvo,
        intensities=(500.0, 100.0, 300.0, 50.0),
        noise_sd=noise_sd,
        seed=seed,
    )


@pytest.fixture
def phantom_volume():
    vol, gt = make_phantom(small_phantom_spec())
    return vol, gt


def random_phantom_spec(rng: np.random.Generator):
    nx = int(rng.integers(24, 49))
    ny = int(rng.integers(24, 49))
    nz = int(rng.integers(1, 6))
    inner = float(rng.uniform(3, 6))
    outer = inner + float(rng.uniform(2, 5))
    start = float(rng.uniform(0, 2 * math.pi))
    sweep = float(rng.uniform(0.3, 2.0))
    return PhantomSpec(
        dims=(nx, ny, nz),
        spacing=Spacing(
            dx=float(rng.uniform(0.5, 3.0)),
            dy=float(rng.uniform(0.5, 3.0)),
            slice_thickness=float(rng.uniform(4.0, 10.0)),
            interslice_gap=float(rng.uniform(0.5, 3.0)),
        ),
        inner_radius_px=inner,
        outer_radius_px=outer,
        center_px=(float(rng.uniform(nx * 0.3, nx * 0.7)), float(rng.uniform(ny * 0.3, ny * 0.7))),
        scar_wedge=ScarWedge(
            angles=AngleRange(start, (start + sweep) % (2 * math.pi)),
            slice_range=(0, int(rng.integers(1, nz + 1))),
        ),
        noise_sd=float(rng.uniform(0, 3.0)),
        seed=int(rng.integers(0, 2**31)),
    )
