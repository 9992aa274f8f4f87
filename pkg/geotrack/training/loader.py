"""Background batch loading into a bounded queue.

One producer thread materialises batches (image decoding, stacking) while
the training loop consumes them. The queue bound caps memory; exceptions
raised by the producer are re-raised in the consumer.
"""

import logging
import queue
import threading
from typing import Callable, Generic, Iterator, Optional, Sequence, TypeVar

import numpy as np

logger = logging.getLogger(__name__)

B = TypeVar("B")

_DONE = object()


class _Failure:
    def __init__(self, exc: BaseException) -> None:
        self.exc = exc


class BatchLoader(Generic[B]):
    """Iterate ``load(indices)`` for each index batch, prefetched in a thread."""

    def __init__(
        self,
        batches: Sequence[np.ndarray],
        load: Callable[[np.ndarray], B],
        maxsize: int = 4,
        poll: float = 0.1,
    ) -> None:
        self.batches = list(batches)
        self.load = load
        self.queue: "queue.Queue[object]" = queue.Queue(maxsize=max(1, maxsize))
        self.poll = poll
        self._stop = threading.Event()
        self._thread: Optional[threading.Thread] = None

    def _produce(self) -> None:
        try:
            for indices in self.batches:
                if self._stop.is_set():
                    return
                item = self.load(indices)
                while not self._stop.is_set():
                    try:
                        self.queue.put(item, timeout=self.poll)
                        break
                    except queue.Full:
                        continue
        except BaseException as e:  # noqa: BLE001
            logger.error("batch loader failed: %s", e)
            self._put_final(_Failure(e))
            return
        self._put_final(_DONE)

    def _put_final(self, item: object) -> None:
        while not self._stop.is_set():
            try:
                self.queue.put(item, timeout=self.poll)
                return
            except queue.Full:
                continue

    def __iter__(self) -> Iterator[B]:
        self._stop.clear()
        self._thread = threading.Thread(target=self._produce, name="geotrack-loader", daemon=True)
        self._thread.start()
        try:
            while True:
                item = self.queue.get()
                if item is _DONE:
                    return
                if isinstance(item, _Failure):
                    raise item.exc
                yield item  # type: ignore[misc]
        finally:
            self.close()

    def __len__(self) -> int:
        return len(self.batches)

    def close(self) -> None:
        """Stop the producer and drop anything still queued."""
        self._stop.set()
        while True:
            try:
                self.queue.get_nowait()
            except queue.Empty:
                break
        if self._thread is not None and self._thread is not threading.current_thread():
            self._thread.join()
            self._thread = None
