"""Deterministic fan-out of fixed task blocks.

Blocks are defined before dispatch and results are returned in submission
order, so output never depends on the worker count.
"""
from concurrent.futures import ProcessPoolExecutor


def pmap(fn, tasks, workers=1):
    tasks = list(tasks)
    if workers <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, tasks))
