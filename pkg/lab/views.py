"""
API Views for recorded experiment runs
"""

from rest_framework import filters, viewsets
from rest_framework.decorators import action
from rest_framework.permissions import AllowAny
from rest_framework.response import Response
from django_filters.rest_framework import DjangoFilterBackend

from .models import ExperimentRun
from .serializers import ExperimentRunSerializer


class ExperimentRunViewSet(viewsets.ReadOnlyModelViewSet):
    """Runs recorded by the management commands"""

    queryset = ExperimentRun.objects.all()
    serializer_class = ExperimentRunSerializer
    permission_classes = [AllowAny]
    filter_backends = [DjangoFilterBackend, filters.SearchFilter, filters.OrderingFilter]
    filterset_fields = ['command', 'status', 'seed']
    search_fields = ['output_dir']
    ordering_fields = ['created_at', 'finished_at', 'seed']
    ordering = ['-created_at']

    @action(detail=True, methods=['get'])
    def summary(self, request, pk=None):
        """Pass/fail summary of one run"""
        run = self.get_object()
        return Response({
            'id': str(run.id),
            'command': run.command,
            'status': run.status,
            'exit_code': run.exit_code,
            'summary': run.summary,
        })
