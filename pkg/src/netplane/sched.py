"""Cooperative M:N task runtime with work stealing and a pluggable clock.

M tasks are multiplexed onto N worker threads. A task runs uninterrupted
until it calls yield_now(), block(), or sleep() -- there is no preemption.
Each task owns a host thread, but the thread only executes while a worker
has dispatched it, so at most N tasks make progress at any moment and all
handoffs happen at explicit suspension points.

Ready queues are plain deques: single append/pop operations are atomic
under the CPython GIL, which is what stands in for lock-free queue
operations here. The pool condition variable is used only for worker
parking, timer bookkeeping, and state transitions.

The clock is pluggable: WallClock for real-time runs, VirtualClock for
deterministic discrete-event runs. Under a virtual clock, time advances
only when every worker is idle and no task is runnable, jumping straight
to the earliest pending timer deadline.
"""
from __future__ import annotations

import heapq
import itertools
import threading
import time
from collections import deque
from enum import Enum
from typing import Any, Callable, Optional


class PoolShutdown(Exception):
    """Raised by spawn() after shutdown has begun."""


class UnknownTask(Exception):
    """Raised by wake() for a task id that was never spawned."""


class TaskCancelled(Exception):
    """Raised inside a task when the pool is torn down underneath it."""


class TaskState(Enum):
    READY = "ready"
    RUNNING = "running"
    BLOCKED = "blocked"
    DONE = "done"


# Why a task handed control back to its worker.
_YIELD, _BLOCK, _DONE = 0, 1, 2

_tls = threading.local()


def current_task() -> Optional["Task"]:
    """The task hosting the calling thread, or None outside the pool."""
    return getattr(_tls, "task", None)


class Task:
    __slots__ = (
        "id", "name", "pool", "state", "entry", "args", "kwargs",
        "pending_wake", "cancelled", "result", "exc",
        "_resume", "_yielded", "_action", "_thread", "done_evt", "_joiners",
    )

    def __init__(self, pool: "WorkerPool", tid: int, entry: Callable,
                 args: tuple, kwargs: dict, name: str):
        self.id = tid
        self.name = name
        self.pool = pool
        self.state = TaskState.READY
        self.entry = entry
        self.args = args
        self.kwargs = kwargs
        self.pending_wake = False
        self.cancelled = False
        self.result: Any = None
        self.exc: Optional[BaseException] = None
        self._resume = threading.Event()
        self._yielded = threading.Event()
        self._action = _YIELD
        self._thread: Optional[threading.Thread] = None
        self.done_evt = threading.Event()
        self._joiners: list[int] = []

    def __repr__(self):
        return f"<Task {self.id} {self.name!r} {self.state.value}>"


class VirtualClock:
    """Discrete-event clock: advances only via the pool's idle protocol."""

    is_virtual = True

    def __init__(self, start: float = 0.0):
        self._t = float(start)

    def now(self) -> float:
        return self._t

    def advance_to(self, t: float) -> None:
        if t > self._t:
            self._t = t


class WallClock:
    """Monotonic wall clock, rebased to 0 at construction."""

    is_virtual = False

    def __init__(self):
        self._epoch = time.monotonic()

    def now(self) -> float:
        return time.monotonic() - self._epoch


class WorkerPool:
    """N worker threads serving cooperative tasks from shared queues.

    Pull order per worker: own local queue, then the global queue (moving a
    small batch into the local queue), then stealing half of a victim's
    local queue, victims round-robin.
    """

    _REFILL = 3  # extra tasks moved global->local per global pull

    def __init__(self, n_workers: int = 1, clock=None, name: str = "pool"):
        if n_workers < 1:
            raise ValueError("n_workers must be >= 1")
        self.n_workers = n_workers
        self.clock = clock if clock is not None else WallClock()
        self.name = name
        self._cond = threading.Condition()
        self._global: deque[Task] = deque()
        self._locals: list[deque[Task]] = [deque() for _ in range(n_workers)]
        self._steal_rr = [0] * n_workers
        self._timers: list[tuple[float, int, int]] = []  # (deadline, seq, task_id)
        self._timer_seq = itertools.count()
        self._tasks: dict[int, Task] = {}
        self._next_id = itertools.count(1)
        self._busy = 0
        self._idle = 0
        self._live = 0  # tasks not yet DONE
        self._shutdown = False
        self._started = False
        self._workers: list[threading.Thread] = []

    # -- lifecycle -----------------------------------------------------

    def run(self) -> None:
        """Start the worker threads (returns immediately)."""
        with self._cond:
            if self._started:
                return
            self._started = True
        for i in range(self.n_workers):
            w = threading.Thread(target=self._worker, args=(i,),
                                 name=f"{self.name}-w{i}", daemon=True)
            self._workers.append(w)
            w.start()

    def shutdown(self, timeout: float = 10.0) -> None:
        """Cancel blocked tasks, drain everything to DONE, stop workers."""
        with self._cond:
            self._shutdown = True
            for t in self._tasks.values():
                if t.state is TaskState.DONE:
                    continue
                t.cancelled = True
                if t.state is TaskState.BLOCKED:
                    t.state = TaskState.READY
                    self._global.append(t)
            self._cond.notify_all()
        deadline = time.monotonic() + timeout
        for w in self._workers:
            w.join(max(0.0, deadline - time.monotonic()))
        for t in list(self._tasks.values()):
            if t._thread is not None:
                t._thread.join(max(0.0, deadline - time.monotonic()))

    def __enter__(self):
        self.run()
        return self

    def __exit__(self, *exc):
        self.shutdown()

    # -- task API --------------------------------------------------------

    def spawn(self, entry: Callable, *args, name: str | None = None,
              **kwargs) -> int:
        """Register a new task, Ready in the global queue; returns its id."""
        with self._cond:
            if self._shutdown:
                raise PoolShutdown("pool is shutting down")
            tid = next(self._next_id)
            task = Task(self, tid, entry, args, kwargs,
                        name or getattr(entry, "__name__", "task"))
            self._tasks[tid] = task
            self._live += 1
            self._global.append(task)
            self._cond.notify_all()
        return tid

    def wake(self, task_id: int) -> None:
        """Make a blocked task runnable; sticky if it is not blocked yet."""
        with self._cond:
            task = self._tasks.get(task_id)
            if task is None:
                raise UnknownTask(f"no task with id {task_id}")
            if task.state is TaskState.BLOCKED:
                task.state = TaskState.READY
                self._global.append(task)
                self._cond.notify_all()
            elif task.state is not TaskState.DONE:
                task.pending_wake = True

    def yield_now(self) -> None:
        """Requeue the calling task and let the worker run something else."""
        task = self._require_current()
        task._action = _YIELD
        self._hand_back(task)

    def block(self) -> None:
        """Park the calling task until wake(); returns immediately if a
        wake is already pending (no lost wakeups)."""
        task = self._require_current()
        with self._cond:
            if task.pending_wake:
                task.pending_wake = False
                return
        task._action = _BLOCK
        self._hand_back(task)

    def sleep(self, duration: float) -> None:
        """Block the calling task until the pool clock has advanced by
        `duration` (virtual or wall, per the pool clock)."""
        task = self._require_current()
        deadline = self.clock.now() + duration
        while self.clock.now() < deadline:
            self.add_timer(deadline, task.id)
            self.block()

    def add_timer(self, deadline: float, task_id: int) -> None:
        """Wake task_id once the pool clock passes `deadline`."""
        with self._cond:
            heapq.heappush(self._timers,
                           (deadline, next(self._timer_seq), task_id))
            self._cond.notify_all()

    def now(self) -> float:
        return self.clock.now()

    def join(self, task_id: int, timeout: float | None = None) -> bool:
        """Wait until task_id is DONE. Callable from tasks or plain threads.
        The timeout is wall-clock in both cases."""
        task = self._tasks.get(task_id)
        if task is None:
            raise UnknownTask(f"no task with id {task_id}")
        cur = current_task()
        if cur is None or cur.pool is not self:
            return task.done_evt.wait(timeout)
        deadline = None if timeout is None else time.monotonic() + timeout
        while task.state is not TaskState.DONE:
            if deadline is not None and time.monotonic() >= deadline:
                return False
            with self._cond:
                if task.state is TaskState.DONE:
                    break
                task._joiners.append(cur.id)
            self.block()
        return True

    def result(self, task_id: int) -> Any:
        """Return value of a DONE task; re-raises the task's exception."""
        task = self._tasks[task_id]
        if task.state is not TaskState.DONE:
            raise RuntimeError(f"task {task_id} not done")
        if task.exc is not None:
            raise task.exc
        return task.result

    def task_state(self, task_id: int) -> TaskState:
        return self._tasks[task_id].state

    def failures(self) -> list[tuple[int, str, BaseException]]:
        """(id, name, exception) for every task that died with an error."""
        return [(t.id, t.name, t.exc) for t in self._tasks.values()
                if t.exc is not None]

    def snapshot(self) -> dict:
        """Consistent queue/worker census, for work-conservation checks."""
        with self._cond:
            return {
                "global": len(self._global),
                "local": [len(q) for q in self._locals],
                "idle": self._idle,
                "busy": self._busy,
                "live": self._live,
            }

    # -- internals -------------------------------------------------------

    def _require_current(self) -> Task:
        task = current_task()
        if task is None or task.pool is not self:
            raise RuntimeError("not inside a task of this pool")
        if self._shutdown or task.cancelled:
            raise TaskCancelled()
        return task

    def _hand_back(self, task: Task) -> None:
        # Transfer control to the dispatching worker and wait to be resumed.
        task._yielded.set()
        task._resume.wait()
        task._resume.clear()
        if self._shutdown or task.cancelled:
            raise TaskCancelled()

    def _task_main(self, task: Task) -> None:
        _tls.task = task
        try:
            if task.cancelled or self._shutdown:
                raise TaskCancelled()
            task.result = task.entry(*task.args, **task.kwargs)
        except TaskCancelled:
            pass
        except BaseException as e:  # recorded, surfaced via result()/failures()
            task.exc = e
        task._action = _DONE
        task._yielded.set()

    def _worker(self, widx: int) -> None:
        while True:
            task = self._acquire(widx)
            if task is None:
                return
            self._dispatch(widx, task)

    def _try_pop(self, widx: int) -> Optional[Task]:
        local = self._locals[widx]
        try:
            return local.popleft()
        except IndexError:
            pass
        try:
            task = self._global.popleft()
        except IndexError:
            task = None
        if task is not None:
            # batch refill keeps follow-up work local to this worker
            for _ in range(self._REFILL):
                try:
                    local.append(self._global.popleft())
                except IndexError:
                    break
            return task
        # steal half of a victim's local queue, round-robin
        for _ in range(self.n_workers - 1):
            victim = self._steal_rr[widx] % self.n_workers
            self._steal_rr[widx] += 1
            if victim == widx:
                continue
            vq = self._locals[victim]
            grab = (len(vq) + 1) // 2
            got = None
            for _ in range(grab):
                try:
                    item = vq.pop()
                except IndexError:
                    break
                if got is None:
                    got = item
                else:
                    local.append(item)
            if got is not None:
                return got
        return None

    def _acquire(self, widx: int) -> Optional[Task]:
        while True:
            with self._cond:
                # claim busy before popping so a virtual-clock advance can
                # never slip in between dequeue and dispatch
                self._busy += 1
            task = self._try_pop(widx)
            if task is not None:
                with self._cond:
                    task.state = TaskState.RUNNING
                return task
            with self._cond:
                self._busy -= 1
                task = None
                try:
                    task = self._global.popleft()
                except IndexError:
                    pass
                if task is not None:
                    self._busy += 1
                    task.state = TaskState.RUNNING
                    return task
                if self._shutdown and self._live == 0:
                    self._cond.notify_all()
                    return None
                if self._fire_due_timers():
                    continue
                self._purge_stale_timers()
                if self._timers:
                    deadline = self._timers[0][0]
                    if self.clock.is_virtual:
                        if self._busy == 0 and not self._any_queued():
                            self.clock.advance_to(deadline)
                            self._fire_due_timers()
                            continue
                        self._idle += 1
                        self._cond.wait()
                        self._idle -= 1
                    else:
                        self._idle += 1
                        self._cond.wait(max(0.0, deadline - self.clock.now()))
                        self._idle -= 1
                else:
                    self._idle += 1
                    self._cond.wait(0.5 if self._shutdown else None)
                    self._idle -= 1

    def _any_queued(self) -> bool:
        return bool(self._global) or any(self._locals)

    def _purge_stale_timers(self) -> None:
        # caller holds self._cond; timers for DONE tasks must not be
        # allowed to drag the virtual clock forward
        while self._timers:
            task = self._tasks.get(self._timers[0][2])
            if task is not None and task.state is not TaskState.DONE:
                return
            heapq.heappop(self._timers)

    def _fire_due_timers(self) -> bool:
        # caller holds self._cond
        now = self.clock.now()
        fired = False
        while self._timers and self._timers[0][0] <= now:
            _, _, tid = heapq.heappop(self._timers)
            task = self._tasks.get(tid)
            if task is None or task.state is TaskState.DONE:
                continue
            if task.state is TaskState.BLOCKED:
                task.state = TaskState.READY
                self._global.append(task)
            else:
                task.pending_wake = True
            fired = True
        if fired:
            self._cond.notify_all()
        return fired

    def _dispatch(self, widx: int, task: Task) -> None:
        if task._thread is None:
            if task.cancelled or self._shutdown:
                with self._cond:
                    self._busy -= 1
                    self._finish_locked(task)
                    self._cond.notify_all()
                return
            task._thread = threading.Thread(
                target=self._task_main, args=(task,),
                name=f"{self.name}-task{task.id}", daemon=True)
            task._thread.start()
        else:
            task._resume.set()
        task._yielded.wait()
        task._yielded.clear()
        action = task._action
        with self._cond:
            self._busy -= 1
            if action == _YIELD:
                task.state = TaskState.READY
                self._global.append(task)
            elif action == _BLOCK:
                if task.pending_wake:
                    task.pending_wake = False
                    task.state = TaskState.READY
                    self._global.append(task)
                else:
                    task.state = TaskState.BLOCKED
            else:
                self._finish_locked(task)
            self._cond.notify_all()

    def _finish_locked(self, task: Task) -> None:
        task.state = TaskState.DONE
        self._live -= 1
        task.done_evt.set()
        for jid in task._joiners:
            j = self._tasks.get(jid)
            if j is None:
                continue
            if j.state is TaskState.BLOCKED:
                j.state = TaskState.READY
                self._global.append(j)
            elif j.state is not TaskState.DONE:
                j.pending_wake = True
        task._joiners.clear()


def yield_now() -> None:
    """Requeue the calling task (module-level convenience)."""
    task = current_task()
    if task is None:
        raise RuntimeError("yield_now() outside a task")
    task.pool.yield_now()


def block() -> None:
    """Park the calling task until wake()."""
    task = current_task()
    if task is None:
        raise RuntimeError("block() outside a task")
    task.pool.block()


def sleep(duration: float) -> None:
    """Sleep on the pool clock of the calling task."""
    task = current_task()
    if task is None:
        raise RuntimeError("sleep() outside a task")
    task.pool.sleep(duration)


class Doorbell:
    """One-shot wakeup signal: consumer waits, producers ring.

    Works for plain threads (via an Event) and for pool tasks (via sticky
    wake), so ring() may be called from anywhere. Only one consumer may
    wait at a time; spurious returns are allowed and expected.
    """

    __slots__ = ("rings", "_evt", "_waiter")

    def __init__(self):
        self.rings = 0
        self._evt = threading.Event()
        self._waiter: Optional[Task] = None

    def ring(self) -> None:
        self.rings += 1
        self._evt.set()
        waiter = self._waiter
        if waiter is not None:
            try:
                waiter.pool.wake(waiter.id)
            except UnknownTask:
                pass

    def wait(self, timeout: float | None = None) -> bool:
        """Wait for a ring. Returns False on timeout (pool-clock seconds
        inside a task, wall seconds outside)."""
        task = current_task()
        if task is None:
            got = self._evt.wait(timeout)
            self._evt.clear()
            return got
        pool = task.pool
        self._waiter = task
        try:
            deadline = None if timeout is None else pool.clock.now() + timeout
            while True:
                if self._evt.is_set():
                    self._evt.clear()
                    return True
                if deadline is not None:
                    if pool.clock.now() >= deadline:
                        return False
                    pool.add_timer(deadline, task.id)
                pool.block()
        finally:
            self._waiter = None


class WakeGate:
    """Consumer-activity counter plus doorbell, shared by one drain loop.

    `active` is written only by the consumer; producers read it and ring
    the doorbell when they observe 0 (notify-if-idle).
    """

    __slots__ = ("active", "doorbell")

    def __init__(self):
        self.active = 0
        self.doorbell = Doorbell()

    def enter(self) -> None:
        self.active = 1

    def leave(self) -> None:
        self.active = 0

    def wait(self, timeout: float | None = None) -> bool:
        return self.doorbell.wait(timeout)
