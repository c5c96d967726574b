"""EMS ambulance-operations simulator.

Subpackages and modules:

* :mod:`ems_sim.geo` -- spherical geometry and great-circle interpolation
* :mod:`ems_sim.streets` -- street graph, shortest paths, travel-time oracle
* :mod:`ems_sim.domain` -- calls, ambulances, trip records, taxonomies
* :mod:`ems_sim.forecast` -- Poisson intensity estimation and generation
* :mod:`ems_sim.dispatch` -- allocation cost model and dispatch policies
* :mod:`ems_sim.sim` -- the discrete-event engine
* :mod:`ems_sim.trace` -- fixed-step trajectory discretization
* :mod:`ems_sim.metrics` -- response-time distributions
* :mod:`ems_sim.io_formats` -- file formats and run configuration
* :mod:`ems_sim.cli` -- the ``ems-sim`` command line
* :mod:`ems_sim.api` -- HTTP/JSON service for the playback UI
"""

__version__ = "0.1.0"
