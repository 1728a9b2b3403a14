from .lock_pool import DummyLockPool, NamedLockPool  # noqa: F401
