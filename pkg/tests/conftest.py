import math

import pytest

from oppaoi.channel import SystemParams

# Frozen values from an independent 40-digit mpmath evaluation of the model
# (free-space loss, rate formula, truncated-exponential moments, renewal ratio).
ORACLE = {
    "path_loss_db": 100.00422483423212046,
    "snr_scale": 9.9902766898811967025,
    "rate_g1": 2397010.9446119096055,
    "q_Bln2": 0.90474935654412892513,
    "ET_Bln2": 0.008042902045940448749,
    "ET2_Bln2": 0.000078203954840520148298,
    "aoi_N3_p0.2_Bln2": 0.015198483839712168922,
    "aoi_N5_p0.2_2Bln2": 0.012925448896893867018,
    # argmin of E[T]/q by golden-section search on the mpmath integrals
    "r_ddagger": 1035461.69472566,
    "r_max": 4532748.3930781373584,
}


@pytest.fixture(scope="session")
def params():
    return SystemParams()


@pytest.fixture(scope="session")
def r0(params):
    return params.bandwidth * math.log(2.0)
