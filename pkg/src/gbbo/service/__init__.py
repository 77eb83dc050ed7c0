from .client import WorkerClient
from .core import Service, ServiceConfig, ServiceError, ServiceMaster, SuggestionServer
from .http import serve, start_http_server
from .store import TaskStore, TrialRecord

__all__ = [
    "Service",
    "ServiceConfig",
    "ServiceError",
    "ServiceMaster",
    "SuggestionServer",
    "TaskStore",
    "TrialRecord",
    "WorkerClient",
    "serve",
    "start_http_server",
]
