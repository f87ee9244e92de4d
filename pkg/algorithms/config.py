"""
Algorithm configuration: the aggregation rule, the number of local steps, the
learning-rate schedule and the gradient noise level.
"""

# Standard Library Imports
import math
from dataclasses import asdict, dataclass

# Django Imports
from django.db import models

# Local Imports
from core.exceptions import ConfigurationError


class AlgorithmKind(models.TextChoices):
    FEDPBC = 'fedpbc', "FedPBC"
    FEDAVG = 'fedavg', "FedAvg"
    FEDAVG_ALL = 'fedavg_all', "FedAvg (all clients weighted)"
    FEDAVG_KNOWN_P = 'fedavg_known_p', "FedAvg (known probabilities)"
    MIFA = 'mifa', "MIFA"


class ScheduleKind(models.TextChoices):
    CONSTANT = 'constant', "Constant"
    DECAYING = 'decaying', "Decaying (1/sqrt)"


@dataclass(frozen=True)
class AlgorithmConfig:
    kind: str = AlgorithmKind.FEDPBC
    local_steps: int = 1
    lr: float = 0.1
    lr_schedule: str = ScheduleKind.CONSTANT
    sigma: float = 0.0

    def clean(self):
        """
        Raises:
            ConfigurationError: Keyed by field, for an unknown algorithm or
            schedule, s < 1, a non-positive learning rate or negative noise.
        """
        errors = {}
        if self.kind not in AlgorithmKind.values:
            errors['algorithm'] = [f"Unknown algorithm '{self.kind}'. Choose one of {', '.join(AlgorithmKind.values)}."]
        if self.lr_schedule not in ScheduleKind.values:
            errors['lr_schedule'] = [f"Unknown schedule '{self.lr_schedule}'."]
        if self.local_steps < 1:
            errors['local_steps'] = ["At least one local step is required."]
        if not (self.lr > 0 and math.isfinite(self.lr)):
            errors['lr'] = ["The learning rate must be a positive number."]
        if not self.sigma >= 0:
            errors['sigma'] = ["The gradient noise must be non-negative."]
        if errors:
            raise ConfigurationError(errors)
        return self

    def lr_at(self, t: int) -> float:
        """eta_t: eta_0 for the constant schedule, eta_0 / sqrt(t/10 + 1) for the decaying one."""
        if self.lr_schedule == ScheduleKind.DECAYING:
            return self.lr / math.sqrt(t / 10 + 1)
        return self.lr

    def as_dict(self):
        return {key: str(value) if isinstance(value, models.TextChoices) else value
                for key, value in asdict(self).items()}
