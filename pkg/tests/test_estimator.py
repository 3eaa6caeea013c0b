import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from lwr_fno import FNORegressor, fno
from lwr_fno.exceptions import ConfigurationError, DomainError
from lwr_fno.godunov import GridSpec
from lwr_fno.scenario import DatasetSpec, build_dataset

SMALL = dict(n_layers=1, modes=(3, 5), width=4, proj_hidden=8, epochs=3, batch_size=4)


@pytest.fixture(scope="module")
def data():
    from lwr_fno.godunov import FundamentalDiagram
    grid = GridSpec(8, 16, 100.0, 5.0)
    spec = DatasetSpec(ic_classes=(0, 1), bc_classes=(0, 1), samples_per_class_pair=3,
                       min_segment=2)
    samples = build_dataset(spec, FundamentalDiagram(), grid)
    X = np.stack([s.inputs for s in samples])
    y = np.stack([s.field.values for s in samples])
    groups = [(s.scenario.ic_class, s.scenario.bc_class) for s in samples]
    return X, y, groups


def test_params_and_clone():
    est = FNORegressor(width=8, lam=0.5)
    params = est.get_params()
    assert params["width"] == 8 and params["lam"] == 0.5
    twin = clone(est)
    assert twin.get_params() == params and twin is not est
    est.set_params(lam=1.0)
    assert est.lam == 1.0


def test_model_tag():
    assert FNORegressor(lam=2.0).model_tag == "pi_fno"
    assert FNORegressor(lam=0.0).model_tag == "fno"
    assert FNORegressor(mode="fno", lam=2.0).model_tag == "fno"


def test_predict_before_fit():
    with pytest.raises(NotFittedError):
        FNORegressor().predict(np.zeros((1, 4, 8, 16)))


def test_fit_predict_score(data):
    X, y, groups = data
    est = FNORegressor(**SMALL, val_fraction=0.25).fit(X, y, groups=groups)
    pred = est.predict(X)
    assert pred.shape == y.shape
    assert pred.min() >= 0 and pred.max() <= 120
    assert len(est.loss_report_) == 3 and len(est.loss_report_.val_mae) == 3
    assert est.n_features_in_ == 4
    assert np.isfinite(est.score(X, y))
    assert est.physics_loss(X).shape == (len(X),)


def test_fit_is_reproducible(data):
    X, y, _ = data
    a = FNORegressor(**SMALL, val_fraction=0.0).fit(X, y)
    b = FNORegressor(**SMALL, val_fraction=0.0).fit(X, y)
    assert a.params_.equal(b.params_)
    c = FNORegressor(**SMALL, val_fraction=0.0, random_state=1).fit(X, y)
    assert not a.params_.equal(c.params_)


def test_eval_set_and_init(data):
    X, y, _ = data
    est = FNORegressor(**SMALL)
    config = fno.FnoConfig(n_layers=1, modes=(3, 5), width=4, proj_hidden=8,
                           grid=GridSpec(8, 16, 100.0, 5.0))
    init = fno.zero_params(config)
    est.fit(X, y, eval_set=(X[:2], y[:2]), init=init)
    assert len(est.loss_report_.val_mae) == 3
    assert init.equal(fno.zero_params(config))


def test_input_validation(data):
    X, y, _ = data
    with pytest.raises(ValueError):
        FNORegressor(**SMALL).fit(X[:, :3], y)
    with pytest.raises(ValueError):
        FNORegressor(**SMALL).fit(X, y[:-1])
    with pytest.raises(DomainError):
        FNORegressor(**SMALL).fit(X, y + 200.0)
    with pytest.raises(ValueError):
        FNORegressor(**SMALL).fit(X, y, groups=[0])


def test_cfl_violation_rejected(data):
    X, y, _ = data
    with pytest.raises(ConfigurationError):
        FNORegressor(**SMALL, dt=10.0).fit(X, y)


def test_predict_rejects_other_grid(data):
    X, y, _ = data
    est = FNORegressor(**SMALL, val_fraction=0.0).fit(X, y)
    with pytest.raises(ValueError):
        est.predict(np.zeros((1, 4, 8, 20)))


def test_from_fitted(data):
    X, y, _ = data
    est = FNORegressor(**SMALL, val_fraction=0.0).fit(X, y)
    rebuilt = FNORegressor.from_fitted(est.config_, est.params_, est.fd_, est.train_config_)
    np.testing.assert_array_equal(rebuilt.predict(X), est.predict(X))
    assert rebuilt.width == 4 and rebuilt.dt == 5.0
    with pytest.raises(ValueError):
        FNORegressor.from_fitted(fno.FnoConfig(), est.params_, est.fd_)
