"""Environment variable handling for specmap with prefix support."""
import os
from functools import cached_property


class EnvSettings:
    """Environment settings with optional prefix support via SPECMAP_ENV_PREFIX."""

    def __init__(self):
        self._prefix = os.getenv("SPECMAP_ENV_PREFIX")
        if self._prefix and not self._prefix.endswith("_"):
            self._prefix = self._prefix + "_"

    def _setting(self, name: str, dflt: str | None = None) -> str | None:
        """Get setting with prefix support."""
        if self._prefix:
            prefixed_name = self._prefix + name
            value = os.getenv(prefixed_name)

            if value is not None:
                return value

        return os.getenv(name, dflt)

    def _int_setting(self, name: str, dflt: int) -> int:
        value = self._setting(name)
        if value is None or not value.strip():
            return dflt
        try:
            return int(value)
        except ValueError:
            raise ValueError(f"{name} must be an integer, got {value!r}") from None

    @cached_property
    def SPECMAP_DENSE_THRESHOLD(self) -> int:
        return self._int_setting("SPECMAP_DENSE_THRESHOLD", 2048)

    @cached_property
    def SPECMAP_WORKERS(self) -> int:
        return max(1, self._int_setting("SPECMAP_WORKERS", 4))

    @cached_property
    def SPECMAP_LOG_LEVEL(self) -> str:
        return (self._setting("SPECMAP_LOG_LEVEL") or "INFO").upper()

    @cached_property
    def SPECMAP_OUTPUT_DIR(self) -> str:
        return self._setting("SPECMAP_OUTPUT_DIR") or "."


env_settings = EnvSettings()


def __dir__():
    """https://peps.python.org/pep-0562/"""
    return [attr for attr in dir(env_settings) if not attr.startswith("_")]


def __getattr__(name):
    """https://peps.python.org/pep-0562/"""
    return getattr(env_settings, name)


__all__ = tuple(__dir__())
