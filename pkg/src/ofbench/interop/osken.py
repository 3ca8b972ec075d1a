"""Launch the os-ken learning switch as a child process."""

from __future__ import annotations

import importlib.util
import logging
import os
import shutil
import signal
import subprocess
import sys
from pathlib import Path

from ..engine.process import hello_exchange, port_is_free

log = logging.getLogger(__name__)

APP_PATH = Path(__file__).with_name("osken_app.py")
PYTHON_ENV = "OFBENCH_OSKEN_PYTHON"


def find_osken_python() -> str | None:
    """Interpreter able to import os_ken: $OFBENCH_OSKEN_PYTHON, else this one."""
    explicit = os.environ.get(PYTHON_ENV)
    if explicit:
        return shutil.which(explicit) or (explicit if os.path.exists(explicit) else None)
    if importlib.util.find_spec("os_ken") is not None:
        return sys.executable
    return None


class OsKenController:
    """Context manager around one os-ken process listening on ``port``."""

    def __init__(self, port: int, host: str = "127.0.0.1", python: str | None = None,
                 ready_timeout: float = 15.0):
        self.host = host
        self.port = port
        self.python = python or find_osken_python()
        self.ready_timeout = ready_timeout
        self.proc: subprocess.Popen | None = None

    @property
    def controller(self) -> str:
        return f"{self.host}:{self.port}"

    def start(self) -> "OsKenController":
        if self.python is None:
            raise RuntimeError(f"os-ken not importable; set {PYTHON_ENV}")
        # run as a plain script so the child needs nothing but os-ken
        self.proc = subprocess.Popen(
            [self.python, str(APP_PATH), "--host", self.host, "--port", str(self.port)],
            stdout=subprocess.DEVNULL, stderr=subprocess.DEVNULL, stdin=subprocess.DEVNULL)
        if not hello_exchange(self.host, self.port, self.ready_timeout):
            self.stop()
            raise RuntimeError("os-ken controller did not answer HELLO")
        log.info("event=osken_ready pid=%d port=%d", self.proc.pid, self.port)
        return self

    def stop(self) -> bool:
        if self.proc is None:
            return True
        if self.proc.poll() is None:
            self.proc.send_signal(signal.SIGTERM)
            try:
                self.proc.wait(5)
            except subprocess.TimeoutExpired:
                self.proc.kill()
                self.proc.wait()
        self.proc = None
        return port_is_free(self.host, self.port)

    def __enter__(self):
        return self.start()

    def __exit__(self, *exc):
        self.stop()
