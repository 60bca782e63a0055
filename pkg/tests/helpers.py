import json


def table_sim(table, default=0.0):
    """SimilarityFn backed by an explicit symmetric table; self-similarity is 1."""

    def sim(q1, q2):
        if q1 == q2:
            return 1.0
        return table.get((q1, q2), table.get((q2, q1), default))

    return sim


def event_line(sid, ts, kind, **fields):
    return json.dumps({"sid": sid, "ts": ts, "kind": kind, **fields})
