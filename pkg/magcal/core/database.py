"""Per-run store of calibration results."""
from magcal.core.utils import get_logger

LOGGER = get_logger(__name__)


class Database:
    """Results of one run, keyed by the calibration mode that produced them.

    Each entry is a dictionary; the mode functions of `taskdict` put a
    CalibResult under 'result' and anything else they produce next to it.
    """

    def __init__(self):
        self._storage = {}

    def update(self, mode, data):
        """Merge `data` into the entry of `mode`, creating it if needed."""
        LOGGER.debug("Storing %s for %s", sorted(data), mode)
        self._storage.setdefault(mode, {}).update(data)

    def get(self, mode, default=None):
        return self._storage.get(mode, default)

    def get_item(self, mode, item):
        """One item of an entry; None if either is missing."""
        return self._storage.get(mode, {}).get(item)
