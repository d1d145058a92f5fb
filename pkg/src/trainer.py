import logging
import math
import os
from collections import deque
from typing import List, Optional, Tuple

import numpy as np
import pandas as pd

from .autodiff import Tape
from .checkpoint import Checkpoint, CheckpointManager
from .config import RunConfig
from .errors import CheckpointError, NumericFault
from .losses import batch_loss
from .models import PlateauState, TrainingResult
from .optimizer import AdamState, get_step
from .resnet import NetworkParams, init_params
from .sampler import draw_batch
from .surrogate import Surrogate

logger = logging.getLogger(__name__)

LOSS_COLUMNS = ["iteration", "loss"]


class PlateauStopper:
    """Stops once `patience` log windows in a row fail to improve the best mean loss by `min_delta`."""

    def __init__(self, patience: int = 0, min_delta: float = 0.0, state: Optional[PlateauState] = None):
        self.patience = patience
        self.min_delta = min_delta
        self.best = math.inf if state is None else state.best
        self.stale = 0 if state is None else state.stale

    def state(self, window: List[float]) -> PlateauState:
        return PlateauState(self.best, self.stale, list(window))

    def update(self, window_loss: float) -> bool:
        if window_loss < self.best - self.min_delta:
            self.best = window_loss
            self.stale = 0
        else:
            self.stale += 1
        return self.patience > 0 and self.stale >= self.patience


class Trainer:
    def __init__(
        self,
        config: RunConfig,
        out_dir: Optional[str] = None,
        threads: int = 1,
        seed: Optional[int] = None,
    ):
        self.config = config
        self.problem = config.build_problem()
        self.network = config.network_config(self.problem)
        self.surrogate = Surrogate(self.problem, self.network)
        self.out_dir = out_dir or config.output.dir
        self.checkpoints = CheckpointManager(self.out_dir)
        self.threads = threads
        self.seed = config.train.seed if seed is None else seed
        self.step = get_step(config.train.optimizer)
        self.tapes = [Tape() for _ in range(threads)]

    @property
    def loss_path(self) -> str:
        return os.path.join(self.out_dir, "loss.csv")

    def initial_checkpoint(self) -> Checkpoint:
        params = init_params(self.network, self.config.net.seed)
        adam = AdamState.zeros(len(params.flat), **self.config.adam.model_dump())
        return Checkpoint(self.config.model_dump(), params, adam, 0, self.seed)

    def _resume_from(self, path: str) -> Checkpoint:
        checkpoint = self.checkpoints.load(path)
        if checkpoint.params.config != self.network:
            raise CheckpointError(f"checkpoint {path} was written for a different network")
        if checkpoint.seed != self.seed:
            logger.warning("resuming with the checkpoint's batch seed %d instead of %d", checkpoint.seed, self.seed)
            self.seed = checkpoint.seed
        self._truncate_loss_log(checkpoint.iteration)
        logger.info("resumed from %s at iteration %d", path, checkpoint.iteration)
        return checkpoint

    def _truncate_loss_log(self, iteration: int) -> None:
        if not os.path.exists(self.loss_path):
            return
        log = pd.read_csv(self.loss_path)
        log[log["iteration"] < iteration].to_csv(self.loss_path, index=False)

    def _append_losses(self, rows: List[Tuple[int, float]]) -> None:
        if not rows:
            return
        exists = os.path.exists(self.loss_path)
        pd.DataFrame(rows, columns=LOSS_COLUMNS).to_csv(
            self.loss_path, mode="a" if exists else "w", header=not exists, index=False
        )

    def _snapshot(self, params, adam, iteration, tail, stopper, window) -> Checkpoint:
        return Checkpoint(
            self.config.model_dump(), params, adam, iteration, self.seed, list(tail), stopper.state(window)
        )

    def train(self, resume: Optional[str] = None) -> TrainingResult:
        """Run the descent loop up to `train.iterations`, checkpointing on interval."""
        os.makedirs(self.out_dir, exist_ok=True)
        if resume:
            checkpoint = self._resume_from(resume)
        else:
            checkpoint = self.initial_checkpoint()
            if os.path.exists(self.loss_path):
                os.remove(self.loss_path)
            self.checkpoints.save(checkpoint)

        settings = self.config.train
        params, adam = checkpoint.params, checkpoint.adam
        tail = deque(checkpoint.loss_tail, maxlen=settings.loss_tail)
        stopper = PlateauStopper(settings.patience, settings.min_delta, checkpoint.plateau)
        window = list(checkpoint.plateau.window)
        pending: List[Tuple[int, float]] = []
        history: List[Tuple[int, float]] = []
        iteration = checkpoint.iteration
        stopped = False

        while iteration < settings.iterations:
            batch = draw_batch(
                self.problem.domain, self.problem.d, settings.batch, self.seed, iteration, self.problem.soft
            )
            try:
                loss, gradient = batch_loss(
                    self.surrogate, params, batch, workers=self.threads, tapes=self.tapes
                )
                flat, adam = self.step(adam, params.flat, gradient)
            except NumericFault as error:
                self._append_losses(pending)
                error.iteration = iteration
                logger.error("numeric fault: %s", error)
                raise
            params = NetworkParams(self.network, flat, params.layout)
            pending.append((iteration, loss))
            history.append((iteration, loss))
            tail.append((iteration, loss))
            window.append(loss)
            iteration += 1

            if iteration % settings.log_every == 0:
                self._append_losses(pending)
                pending = []
                window_loss = float(np.mean(window))
                window = []
                logger.info("iteration %d: mean loss %.6e", iteration, window_loss)
                if stopper.update(window_loss):
                    logger.info("loss plateaued for %d windows; stopping at iteration %d", stopper.patience, iteration)
                    stopped = True
            if iteration % settings.checkpoint_every == 0 or stopped:
                self._append_losses(pending)
                pending = []
                self.checkpoints.save(self._snapshot(params, adam, iteration, tail, stopper, window))
            if stopped:
                break

        self._append_losses(pending)
        self.checkpoints.save(self._snapshot(params, adam, iteration, tail, stopper, window))
        return TrainingResult(iteration, history, stopped)
