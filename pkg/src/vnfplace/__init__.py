"""VNF placement with replicas for load balancing.

Modules: ``topology`` (SNDlib parsing, candidate paths), ``costmodel``
(piecewise-linear link cost), ``traffic`` (demands and service chains),
``solution`` (loads, objective, validator), ``exact`` (branch-and-bound TE and
RA), ``ga`` (three-stage genetic algorithm), ``rfpa`` (random-fit baseline)
and ``harness`` (experiments and tables).
"""

__version__ = "0.1.0"
