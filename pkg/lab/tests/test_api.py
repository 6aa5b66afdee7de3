"""
Tests for the recorded-runs API
"""

from django.urls import reverse
from rest_framework import status
from rest_framework.test import APIClient, APITestCase

from lab.models import ExperimentRun


class ExperimentRunAPITest(APITestCase):
    """
    Test the runs endpoints

    FUNCTIONALITY: Read-only listing, filtering and per-run summaries
    """

    def setUp(self):
        self.client = APIClient()
        self.ok = ExperimentRun.objects.create(
            command=ExperimentRun.Command.VERIFY, seed=1, summary={'checks': {'theorem2': True}},
        )
        self.failed = ExperimentRun.objects.create(
            command=ExperimentRun.Command.CONVERGE, status=ExperimentRun.Status.ASSERTION_FAILED, seed=2,
            summary={'checks': {'exact': False}},
        )

    def test_list_runs(self):
        """
        TEST 1: Every run is listed with its exit code
        TESTS: GET /api/runs/
        """
        response = self.client.get(reverse('run-list'))
        self.assertEqual(response.status_code, status.HTTP_200_OK)
        results = response.data['results'] if isinstance(response.data, dict) else response.data
        self.assertEqual({r['exit_code'] for r in results}, {0, 1})

    def test_filter_by_status(self):
        """
        TEST 2: Filtering on status returns only the failed run
        TESTS: GET /api/runs/?status=ASSERTION_FAILED
        """
        response = self.client.get(reverse('run-list'), {'status': 'ASSERTION_FAILED'})
        results = response.data['results'] if isinstance(response.data, dict) else response.data
        self.assertEqual([r['command'] for r in results], ['converge'])

    def test_summary_action(self):
        """
        TEST 3: The summary action returns the checks
        TESTS: GET /api/runs/{id}/summary/
        """
        response = self.client.get(reverse('run-summary', args=[self.failed.id]))
        self.assertEqual(response.status_code, status.HTTP_200_OK)
        self.assertEqual(response.data['exit_code'], 1)
        self.assertEqual(response.data['summary'], {'checks': {'exact': False}})

    def test_read_only(self):
        """
        TEST 4: Runs cannot be created through the API
        TESTS: POST /api/runs/
        """
        response = self.client.post(reverse('run-list'), {'command': 'sample'}, format='json')
        self.assertEqual(response.status_code, status.HTTP_405_METHOD_NOT_ALLOWED)
