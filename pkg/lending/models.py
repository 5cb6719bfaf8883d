from django.db import models
from django.utils import timezone


class ExperimentRun(models.Model):
    """One invocation of the microlend command"""

    STATUS_CHOICES = [
        ('pending', 'Pending'),
        ('running', 'Running'),
        ('completed', 'Completed'),
        ('failed', 'Failed'),
    ]

    COMMAND_CHOICES = [
        ('run', 'Run'),
        ('sweep', 'Sweep'),
        ('pool', 'Pool'),
        ('report', 'Report'),
    ]

    command = models.CharField(max_length=20, choices=COMMAND_CHOICES)
    scenario = models.CharField(max_length=200, blank=True, help_text="Base scenario name")
    seed = models.BigIntegerField(default=0)
    profile = models.CharField(max_length=20, default='quick')
    status = models.CharField(max_length=20, choices=STATUS_CHOICES, default='pending')
    config = models.JSONField(default=dict, blank=True, help_text="Fully resolved configuration")
    output_dir = models.CharField(max_length=500, blank=True)
    wall_time = models.FloatField(blank=True, null=True, help_text="Wall-clock seconds")
    error_message = models.TextField(blank=True, null=True)

    created_at = models.DateTimeField(default=timezone.now)
    completed_at = models.DateTimeField(blank=True, null=True)

    class Meta:
        ordering = ['-created_at']
        indexes = [
            models.Index(fields=['status', '-created_at'], name='lending_exp_status_6b1f2e_idx'),
            models.Index(fields=['scenario'], name='lending_exp_scenari_0c9d4a_idx'),
        ]

    def __str__(self):
        return f"{self.command} {self.scenario} (seed {self.seed}) - {self.status}"

    @property
    def is_completed(self):
        return self.status == 'completed'


class AlgorithmSummary(models.Model):
    """Per-replication outcome of one algorithm in one scenario"""

    run = models.ForeignKey(ExperimentRun, on_delete=models.CASCADE, related_name='summaries')
    scenario = models.CharField(max_length=200)
    algorithm = models.CharField(max_length=50)
    replication = models.IntegerField()

    converged_utility = models.FloatField(blank=True, null=True)
    normalized_utility = models.FloatField(blank=True, null=True, help_text="Worst algorithm -1, perfect rule +1")
    rise_time = models.IntegerField(blank=True, null=True)
    post_shift_rise_time = models.IntegerField(blank=True, null=True)
    converged_approval_rate = models.FloatField(blank=True, null=True)
    converged_default_rate = models.FloatField(blank=True, null=True)

    class Meta:
        ordering = ['run', 'scenario', 'algorithm', 'replication']
        indexes = [
            models.Index(fields=['scenario', 'algorithm'], name='lending_alg_scenari_3e7a51_idx'),
        ]

    def __str__(self):
        return f"{self.scenario}/{self.algorithm} #{self.replication}"
