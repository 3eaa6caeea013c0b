"""scikit-learn style wrapper around the FNO and its training loop."""
from __future__ import annotations

import logging

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.metrics import r2_score
from sklearn.utils.validation import check_is_fitted

from . import training
from .fno import FnoConfig, FnoParams, init_params
from .godunov import FundamentalDiagram, GridSpec, check_cfl
from .scenario import make_rng
from .validation import check_inputs, check_inputs_targets

logger = logging.getLogger(__name__)


class FNORegressor(RegressorMixin, BaseEstimator):
    """Fourier Neural Operator regressor from encoded conditions to density fields.

    ``X`` has shape ``(n, 4, nx, nt)`` (see :func:`lwr_fno.fno.encode_input`)
    and ``y`` has shape ``(n, nx, nt)`` in veh/km. With ``mode="pi_fno"`` the
    loss adds ``lam`` times the discrete conservation residual, which needs
    the cell size ``dx`` (m), step ``dt`` (s) and the fundamental diagram.

    Validation: ``fit`` uses ``eval_set`` when given, otherwise a stratified
    split of ``val_fraction`` over ``groups``; ``val_fraction=0`` disables it
    and the last epoch's weights are kept.
    """

    def __init__(self, n_layers=4, modes=(8, 16), width=16, proj_hidden=128, lift_hidden=None,
                 activation="gelu", spectral_path="pruned", mode="pi_fno", lam=2.0,
                 epochs=100, batch_size=16, lr=1e-2, lr_decay=(25, 0.5), val_fraction=0.1,
                 u_max=120.0, v_max=60.0, dx=100.0, dt=5.0, clip_output=True,
                 random_state=0):
        self.n_layers = n_layers
        self.modes = modes
        self.width = width
        self.proj_hidden = proj_hidden
        self.lift_hidden = lift_hidden
        self.activation = activation
        self.spectral_path = spectral_path
        self.mode = mode
        self.lam = lam
        self.epochs = epochs
        self.batch_size = batch_size
        self.lr = lr
        self.lr_decay = lr_decay
        self.val_fraction = val_fraction
        self.u_max = u_max
        self.v_max = v_max
        self.dx = dx
        self.dt = dt
        self.clip_output = clip_output
        self.random_state = random_state

    # -- construction helpers --------------------------------------------

    def _build(self, nx: int, nt: int):
        fd = FundamentalDiagram(u_max=self.u_max, v_max=self.v_max)
        grid = GridSpec(nx, nt, self.dx, self.dt)
        check_cfl(grid, fd)
        config = FnoConfig(n_layers=self.n_layers, modes=tuple(self.modes), width=self.width,
                           proj_hidden=self.proj_hidden, lift_hidden=self.lift_hidden,
                           activation=self.activation, u_max=self.u_max, grid=grid,
                           spectral_path=self.spectral_path)
        train_config = training.TrainConfig(lam=self.lam, epochs=self.epochs,
                                            batch_size=self.batch_size, lr=self.lr,
                                            lr_decay=tuple(self.lr_decay),
                                            seed=self.random_state, mode=self.mode)
        return fd, grid, config, train_config

    @classmethod
    def from_fitted(cls, config: FnoConfig, params: FnoParams, fd: FundamentalDiagram,
                    train_config: training.TrainConfig | None = None) -> "FNORegressor":
        """Rebuild a fitted estimator from saved parts (e.g. a checkpoint)."""
        if config.grid is None:
            raise ValueError("config must carry its grid")
        params.check(config)
        tc = train_config or training.TrainConfig()
        est = cls(n_layers=config.n_layers, modes=config.modes, width=config.width,
                  proj_hidden=config.proj_hidden, lift_hidden=config.lift_hidden,
                  activation=config.activation, spectral_path=config.spectral_path,
                  mode=tc.mode, lam=tc.lam, epochs=tc.epochs, batch_size=tc.batch_size,
                  lr=tc.lr, lr_decay=tc.lr_decay, u_max=fd.u_max, v_max=fd.v_max,
                  dx=config.grid.dx, dt=config.grid.dt, random_state=tc.seed)
        est.fd_, est.grid_, est.config_, est.train_config_ = fd, config.grid, config, tc
        est.params_ = params
        est.loss_report_ = training.LossReport()
        est.n_features_in_ = config.in_channels
        return est

    @property
    def model_tag(self) -> str:
        return "pi_fno" if self.mode == "pi_fno" and self.lam > 0 else "fno"

    # -- estimator API ---------------------------------------------------

    def fit(self, X, y, *, groups=None, eval_set=None, init=None):
        """Train from ``init`` params (seeded random init when ``None``).

        Args:
            groups: per-sample labels for the stratified validation split.
            eval_set: explicit ``(X_val, y_val)``; overrides ``val_fraction``.
        """
        X, y = check_inputs_targets(X, y, self.u_max)
        fd, grid, config, train_config = self._build(*X.shape[2:])

        val = None
        if eval_set is not None:
            xv, yv = check_inputs_targets(*eval_set, self.u_max)
            val = (xv, yv)
        elif self.val_fraction > 0:
            labels = np.zeros(len(X), dtype=int) if groups is None else groups
            if len(labels) != len(X):
                raise ValueError("groups must have one label per sample")
            tr, va = training.stratified_split(labels, self.val_fraction, self.random_state)
            if len(va) and len(tr):
                X, y, val = X[tr], y[tr], (X[va], y[va])

        if init is None:
            init = init_params(config, make_rng(self.random_state))
        logger.info("fitting on %d samples (%d validation), grid %dx%d",
                    len(X), 0 if val is None else len(val[0]), grid.nx, grid.nt)
        params, report = training.train(config, init, (X, y), val, train_config, fd, grid)

        self.fd_, self.grid_, self.config_, self.train_config_ = fd, grid, config, train_config
        self.params_ = params
        self.loss_report_ = report
        self.n_features_in_ = config.in_channels
        return self

    def predict(self, X):
        """Density fields ``(n, nx, nt)`` in veh/km, clipped to ``[0, u_max]``
        when ``clip_output`` is set."""
        check_is_fitted(self, "params_")
        X = check_inputs(X, n_channels=self.config_.in_channels, grid_shape=self.grid_.shape)
        pred = training.predict_batched(X, self.params_, self.config_)
        return np.clip(pred, 0.0, self.fd_.u_max) if self.clip_output else pred

    def score(self, X, y, sample_weight=None):
        """R^2 over all cells of all samples."""
        pred = self.predict(X)
        y = np.asarray(y, dtype=np.float64)
        return r2_score(y.reshape(len(y), -1).ravel(), pred.reshape(len(pred), -1).ravel())

    def physics_loss(self, X) -> np.ndarray:
        """Per-sample conservation-residual norm of the (unclipped) predictions."""
        check_is_fitted(self, "params_")
        X = check_inputs(X, n_channels=self.config_.in_channels, grid_shape=self.grid_.shape)
        pred = training.predict_batched(X, self.params_, self.config_)
        return training.physics_loss(pred, self.fd_, self.grid_).data
