from django.contrib import admin
from .models import ExperimentRun, AlgorithmSummary

admin.site.site_header = 'MicroLend Admin'
admin.site.site_title = 'MicroLend'
admin.site.index_title = 'Experiment Registry'


class AlgorithmSummaryInline(admin.TabularInline):
    model = AlgorithmSummary
    extra = 0
    readonly_fields = ('scenario', 'algorithm', 'replication', 'converged_utility', 'normalized_utility',
                       'rise_time', 'post_shift_rise_time', 'converged_approval_rate', 'converged_default_rate')
    can_delete = False


@admin.register(ExperimentRun)
class ExperimentRunAdmin(admin.ModelAdmin):
    list_display = ('id', 'command', 'scenario', 'seed', 'profile', 'status', 'wall_time', 'created_at')
    list_filter = ('command', 'status', 'profile', 'created_at')
    search_fields = ('scenario', 'output_dir')
    readonly_fields = ('created_at', 'completed_at', 'wall_time', 'config')
    ordering = ('-created_at',)
    inlines = [AlgorithmSummaryInline]


@admin.register(AlgorithmSummary)
class AlgorithmSummaryAdmin(admin.ModelAdmin):
    list_display = ('id', 'run', 'scenario', 'algorithm', 'replication', 'converged_utility',
                    'normalized_utility', 'rise_time')
    list_filter = ('algorithm', 'scenario')
    search_fields = ('scenario', 'algorithm')
    ordering = ('run', 'scenario', 'algorithm', 'replication')
