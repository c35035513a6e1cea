import numpy as np
import pytest

import pompkit as pk

GOMPERTZ_DATA_SEED = 1914


@pytest.fixture(scope="session")
def gompertz_truth():
    return pk.gompertz_model().params


@pytest.fixture(scope="session")
def gompertz_fitted():
    """Gompertz model carrying a self-simulated dataset at the true parameters."""
    model = pk.gompertz_model()
    record = pk.simulate(model, seed=GOMPERTZ_DATA_SEED)[0]
    return pk.attach_data(model, record)


@pytest.fixture(scope="session")
def gompertz_exact_loglik(gompertz_fitted):
    y = gompertz_fitted.data.observations[:, 0]
    ssm = pk.gompertz_ssm(gompertz_fitted.params.as_dict())
    return pk.kalman_loglik(ssm, np.log(y))


@pytest.fixture(scope="session")
def gompertz_exact_mle(gompertz_fitted):
    theta, loglik, result = pk.kalman_exact_mle(
        gompertz_fitted.data, gompertz_fitted.params)
    assert result.status.startswith("converged")
    return theta, loglik


@pytest.fixture(scope="session")
def ricker_fitted():
    model = pk.ricker_model()
    record = pk.simulate(model, seed=73691676)[0]
    return pk.attach_data(model, record)
