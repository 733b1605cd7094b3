"""Water-footprint-aware ingredient substitution over a food knowledge graph.

The package covers the full pipeline: parsing edge interchange files,
building an immutable typed graph, aligning raw ingredient names onto
canonical identifiers, imputing missing numeric values with a small
feed-forward regressor, ranking lower-footprint substitutes, and serving
the result over HTTP.
"""

__version__ = "0.1.0"
