import pytest

from dcdclab.converter_full import ControllerGains, ConverterParams, LoadEvent


@pytest.fixture
def params():
    return ConverterParams(R_L=0.01, R_C=0.01, C=1e-3, L=1e-5, N_f=4, U_S=12.0, U_ref=5.0,
                           R_load=1.0, T=1e-5)


@pytest.fixture
def params_step(params):
    from dataclasses import replace
    return replace(params, load_event=LoadEvent(1e-3, 0.1))


@pytest.fixture
def gains():
    return ControllerGains(K_p=2.7, K_d=1.5e-8, K_i=4400.0, K_dd=7.5e-14, T_d=5.3e-6, T_dd=1.2e-6)
