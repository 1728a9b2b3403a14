"""Pool of named shared locks.

Guards the process-wide factor cache: threads factorizing the same
matrix (by fingerprint) wait on one another, while threads concerned with
distinct matrices do not block.

"""
import threading


class NamedLock:
    """A Lock managed by a NamedLockPool.

    Not intended for use outside of its pool, e.g.:

        locks = NamedLockPool()

        with locks.acquire(fingerprint):
            ... factorize once ...

    """
    __slots__ = ('pool', 'name', 'count', '_lock')

    def __init__(self, pool, name):
        self.pool = pool
        self.name = name

        # number of threads holding or awaiting this lock
        self.count = 0

        self._lock = threading.Lock()

    def release(self):
        """Release the lock such that another thread may acquire it.

        Best left to the context manager interface.

        """
        self._lock.release()
        self.pool._release_(self)

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc_value, traceback):
        self.release()


class NamedLockPool:
    """A pool of named shared Locks.

    There is no more than one lock for a given name at any time. A lock is
    discarded once its use count drops to zero, and subsequent requests
    for the same name receive a fresh lock.

    """
    _lock_class_ = NamedLock

    __slots__ = ('_locks_', '_pool_lock_')

    def __init__(self):
        self._locks_ = {}
        self._pool_lock_ = threading.Lock()

    def __len__(self):
        return len(self._locks_)

    def acquire(self, name):
        """Acquire the NamedLock shared for the given name."""
        with self._pool_lock_:
            try:
                lock = self._locks_[name]
            except KeyError:
                lock = self._locks_[name] = self._lock_class_(self, name)

            lock.count += 1

        try:
            lock._lock.acquire()
        except BaseException:
            # interrupted: return to consistent state
            with self._pool_lock_:
                self._discard_(lock)
            raise

        return lock

    def _discard_(self, lock):
        lock.count -= 1

        if lock.count == 0:
            del self._locks_[lock.name]

    def _release_(self, lock):
        with self._pool_lock_:
            self._discard_(lock)


class DummyLock:
    """NamedLock which does not lock."""

    __slots__ = ('pool', 'name')

    def __init__(self, pool, name):
        self.pool = pool
        self.name = name

    def release(self):
        """dummy: no-op"""

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc_value, traceback):
        """dummy: no-op"""


class DummyLockPool(NamedLockPool):
    """NamedLockPool which never locks."""

    __slots__ = ()

    def __init__(self):
        self._locks_ = {}
        self._pool_lock_ = None

    def acquire(self, name):
        """Construct a DummyLock."""
        return DummyLock(self, name)
