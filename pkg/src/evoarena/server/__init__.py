"""Genome dispatch service: sessions, task leases, spot verification, events.

`sessions` holds the framework-free core (Session / SessionManager), `store`
the append-only on-disk journal, `schemas` the wire models, and `app` the
HTTP layer that exposes it all.
"""

from .app import create_app  # noqa: F401
from .sessions import ProtocolError, Session, SessionManager  # noqa: F401
