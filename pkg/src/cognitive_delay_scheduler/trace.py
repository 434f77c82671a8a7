"""Optional per-packet and per-frame CSV traces of a run."""

import csv
import os
from types import TracebackType
from typing import IO, Any, List, Optional, Sequence, Type

__all__ = ["FrameTrace", "PacketTrace", "open_traces"]


class _CsvTrace:
    header: List[str] = []

    def __init__(self, path: str):
        self.path = path
        self._stream: IO[str] = open(path, "w", encoding="utf-8", newline="")
        self._writer = csv.writer(self._stream)
        self._writer.writerow(self.header)

    def close(self) -> None:
        if not self._stream.closed:
            self._stream.close()

    def __enter__(self) -> "_CsvTrace":
        return self

    def __exit__(
        self,
        exc_type: Optional[Type[BaseException]],
        exc: Optional[BaseException],
        tb: Optional[TracebackType],
    ) -> None:
        self.close()


class PacketTrace(_CsvTrace):
    header = ["user", "arrival_time", "served_slot", "delay"]

    def record(self, user: int, arrival_time: float, served_slot: int) -> None:
        self._writer.writerow([user + 1, repr(arrival_time), served_slot, repr(served_slot - arrival_time)])


class FrameTrace(_CsvTrace):
    def __init__(self, path: str, n_users: int):
        self.header = (
            ["k", "slots"]
            + [f"Y_{i + 1}" for i in range(n_users)]
            + [f"r_{i + 1}" for i in range(n_users)]
            + ["order", "lyapunov"]
        )
        super().__init__(path)

    def record(
        self,
        k: int,
        slots: int,
        y: Sequence[float],
        r: Sequence[float],
        order: Sequence[int],
        lyapunov: float,
    ) -> None:
        row: List[Any] = [k, slots, *map(repr, y), *map(repr, r)]
        row.append(" ".join(str(u + 1) for u in order))
        row.append(repr(lyapunov))
        self._writer.writerow(row)


def open_traces(trace_dir: str, label: str, n_users: int) -> "tuple[PacketTrace, FrameTrace]":
    os.makedirs(trace_dir, exist_ok=True)
    return (
        PacketTrace(os.path.join(trace_dir, f"packets_{label}.csv")),
        FrameTrace(os.path.join(trace_dir, f"frames_{label}.csv"), n_users),
    )
