"""
Django Admin Configuration
"""

from django.contrib import admin

from .models import ExperimentRun
from .reporting import to_json


@admin.register(ExperimentRun)
class ExperimentRunAdmin(admin.ModelAdmin):
    """Recorded runs are read-only"""
    list_display = ('command', 'status', 'seed', 'output_dir', 'created_at', 'duration')
    list_filter = ('command', 'status', 'created_at')
    search_fields = ('output_dir', 'id')
    readonly_fields = ('id', 'command', 'status', 'seed', 'config', 'summary_preview',
                       'output_dir', 'created_at', 'finished_at', 'duration')
    ordering = ('-created_at',)
    date_hierarchy = 'created_at'

    fieldsets = (
        ('Run', {
            'fields': ('id', 'command', 'status', 'seed', 'output_dir')
        }),
        ('Results', {
            'fields': ('summary_preview', 'config'),
        }),
        ('Timestamps', {
            'fields': ('created_at', 'finished_at', 'duration'),
            'classes': ('collapse',)
        }),
    )

    def summary_preview(self, obj):
        return to_json(obj.summary)
    summary_preview.short_description = 'Summary'

    def has_add_permission(self, request):
        return False

    def has_change_permission(self, request, obj=None):
        return False
