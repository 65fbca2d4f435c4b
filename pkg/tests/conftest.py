import warnings

import numpy as np
import pytest

warnings.filterwarnings("ignore", message=".*TBB.*")


@pytest.fixture(scope="session", autouse=True)
def warm_kernels():
    """Compile the jitted kernels on tiny inputs once, up front.

    Keeps JIT compilation out of individual test timings (the acceptance
    suite asserts wall-clock budgets).
    """
    import orthoflow as of
    from orthoflow import gradcheck

    rng = np.random.default_rng(0)
    fm = of.FeatureMap(rng.standard_normal((8, 8, 4)))
    pyr = of.build_pyramid(of.FeatureMap(rng.standard_normal((8, 8, 4))))
    att = of.attend_pyramid(pyr, radius=2)
    flow = of.FlowField(rng.uniform(-1, 1, (8, 8)), rng.uniform(-1, 1, (8, 8)))
    of.local_axial_attention(fm, of.AttentionConfig(axis=of.VERTICAL, radius=2))
    of.attention_backward(
        fm,
        of.AttentionConfig(axis=of.HORIZONTAL, radius=2),
        of.FeatureMap(rng.standard_normal((8, 8, 4))),
    )
    vol = of.build_orthogonal_volume(fm, att, flow)
    of.orthogonal_volume_backward(
        fm, att, flow, None, rng.standard_normal(vol.data.shape)
    )
    of.build_local2d_volume(fm, pyr, flow, radius=1)
    of.build_global1d_volume(fm, fm)
    # float32 variants compile separately
    fm32 = of.FeatureMap(rng.standard_normal((8, 8, 4)).astype(np.float32))
    att32 = of.attend_pyramid(
        of.build_pyramid(fm32), radius=2
    )
    of.build_orthogonal_volume(
        fm32, att32, of.FlowField.zeros(8, 8, dtype=np.float32)
    )
    of.local_axial_attention(fm32, of.AttentionConfig(axis=of.VERTICAL, radius=2))
    of.build_local2d_volume(fm32, of.build_pyramid(fm32), of.FlowField.zeros(8, 8, dtype=np.float32), radius=1)
    of.build_global1d_volume(fm32, fm32)
    gradcheck.attention_gradcheck(0, shape=(6, 6, 3), radius=1)
