#!/usr/bin/env python3
"""Convert a citation dataset to the `ses` graph JSON schema.

Two input layouts are understood:

  linqs      <dir>/<name>.content and <dir>/<name>.cites, as distributed by
             LINQS (paper id, binary word features, class label per line;
             cited/citing id pairs). Standard library only.
  planetoid  <dir>/ind.<name>.{x,tx,allx,y,ty,ally,graph,test.index}, the
             pickled Planetoid files. Needs numpy and scipy.

The split is left out so that `ses` draws its seeded 60/20/20 partition.

    python3 scripts/planetoid_to_json.py --format planetoid --name cora raw/ cora.json
"""

import argparse
import json
import pathlib
import pickle
import sys


def linqs(root, name):
    ids, rows, labels = {}, [], []
    with open(root / f"{name}.content") as f:
        for line in f:
            parts = line.split()
            if not parts:
                continue
            ids[parts[0]] = len(ids)
            rows.append([float(v) for v in parts[1:-1]])
            labels.append(parts[-1])
    classes = sorted(set(labels))
    edges, dropped = set(), 0
    with open(root / f"{name}.cites") as f:
        for line in f:
            parts = line.split()
            if len(parts) != 2:
                continue
            a, b = parts
            if a not in ids or b not in ids:
                dropped += 1
                continue
            i, j = ids[a], ids[b]
            if i != j:
                edges.add((min(i, j), max(i, j)))
    if dropped:
        print(f"dropped {dropped} citations to papers without content", file=sys.stderr)
    return rows, [classes.index(label) for label in labels], sorted(edges)


def planetoid(root, name):
    import numpy as np
    import scipy.sparse as sp

    def load(suffix):
        with open(root / f"ind.{name}.{suffix}", "rb") as f:
            return pickle.load(f, encoding="latin1")

    x, tx, allx, y, ty, ally, graph = (load(s) for s in ("x", "tx", "allx", "y", "ty", "ally", "graph"))
    test_index = [int(v) for v in open(root / f"ind.{name}.test.index")]
    test_sorted = sorted(test_index)
    if name == "citeseer":
        # Isolated test nodes are missing from tx/ty; pad them with zeros.
        full = range(test_sorted[0], test_sorted[-1] + 1)
        tx_ext = sp.lil_matrix((len(full), x.shape[1]))
        tx_ext[np.array(test_sorted) - test_sorted[0], :] = tx
        tx = tx_ext
        ty_ext = np.zeros((len(full), y.shape[1]))
        ty_ext[np.array(test_sorted) - test_sorted[0], :] = ty
        ty = ty_ext
    features = sp.vstack((allx, tx)).tolil()
    features[test_index, :] = features[test_sorted, :]
    onehot = np.vstack((ally, ty))
    onehot[test_index, :] = onehot[test_sorted, :]
    labels = onehot.argmax(axis=1).tolist()
    n = features.shape[0]
    edges = set()
    for i, neighbours in graph.items():
        for j in neighbours:
            if i != j and i < n and j < n:
                edges.add((min(i, j), max(i, j)))
    rows = features.toarray().tolist()
    return rows, labels, sorted(edges)


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--format", choices=["linqs", "planetoid"], default="linqs")
    ap.add_argument("--name", required=True, help="dataset stem, e.g. cora or citeseer")
    ap.add_argument("src", type=pathlib.Path)
    ap.add_argument("out", type=pathlib.Path)
    args = ap.parse_args()
    load = linqs if args.format == "linqs" else planetoid
    rows, labels, edges = load(args.src, args.name)
    doc = {
        "num_nodes": len(rows),
        "edges": [list(e) for e in edges],
        "features": rows,
        "labels": labels,
        "num_classes": max(labels) + 1,
    }
    args.out.write_text(json.dumps(doc))
    print(f"{args.name}: {len(rows)} nodes, {len(edges)} edges, {len(rows[0])} features, {max(labels) + 1} classes")


if __name__ == "__main__":
    main()
