"""
Defines the record of completed experiment runs, stored when a run or sweep
is invoked with --record.
"""

# Standard Library Imports
import math

# Django Imports
from django.core.exceptions import ValidationError
from django.db import models

# Local Imports
from algorithms.config import AlgorithmKind

from .config import LinkScheme


class ExperimentRun(models.Model):
    """
    One completed run of one configuration under one seed.
    """
    config_json = models.TextField(
        verbose_name="Configuration",
        help_text="The fully-defaulted configuration, as canonical JSON."
    )
    config_digest = models.CharField(
        max_length=16,
        db_index=True,
        verbose_name="Configuration Digest",
        help_text="Short SHA-256 digest of the canonical configuration."
    )
    algorithm = models.CharField(
        max_length=32,
        choices=AlgorithmKind.choices,
        verbose_name="Algorithm"
    )
    link_scheme = models.CharField(
        max_length=32,
        choices=LinkScheme.choices,
        verbose_name="Link Scheme"
    )
    seed = models.IntegerField(
        verbose_name="Seed",
        help_text="Root seed of the run."
    )
    rounds = models.PositiveIntegerField(
        verbose_name="Rounds",
        help_text="Number of communication rounds that were run."
    )
    final_distance = models.FloatField(
        verbose_name="Final Distance",
        help_text="Distance of the server model to the global optimum after the last round."
    )
    mean_distance_last_100 = models.FloatField(
        verbose_name="Mean Distance (last 100 rounds)"
    )
    output_path = models.CharField(
        max_length=500,
        blank=True,
        verbose_name="Output File"
    )
    created_at = models.DateTimeField(auto_now_add=True)

    class Meta:
        verbose_name = "Experiment Run"
        verbose_name_plural = "Experiment Runs"
        ordering = ['-created_at']

    def __str__(self):
        return f"{self.get_algorithm_display()} on {self.get_link_scheme_display()} (seed {self.seed})"

    def clean(self):
        """
        Rejects negative seeds and metrics that are not finite numbers.
        """
        errors = {}
        if self.seed is not None and self.seed < 0:
            errors['seed'] = "The seed must be non-negative."
        for name in ('final_distance', 'mean_distance_last_100'):
            value = getattr(self, name)
            if value is not None and not math.isfinite(value):
                errors[name] = "Metrics must be finite numbers."
        if errors:
            raise ValidationError(errors)

    @classmethod
    def record(cls, cfg, summary, output_path='') -> 'ExperimentRun':
        """Validates and saves the run described by an ExperimentConfig and its RunSummary."""
        run = cls(
            config_json=cfg.dumps(),
            config_digest=summary.config_digest,
            algorithm=summary.algorithm,
            link_scheme=summary.link_scheme,
            seed=summary.seed,
            rounds=summary.rounds,
            final_distance=summary.final_distance,
            mean_distance_last_100=summary.mean_distance_last_100,
            output_path=str(output_path),
        )
        run.full_clean()
        run.save()
        return run
