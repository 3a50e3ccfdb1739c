# SPDX-License-Identifier: Apache-2.0
"""Shifted sphere: reads {"x": [...]} on stdin, prints {"y": value}."""
import json
import sys

x = json.loads(sys.stdin.readline())["x"]
print(json.dumps({"y": sum((v - 0.5) ** 2 for v in x)}))
