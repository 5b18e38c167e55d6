"""Generalized continental-US outline (lat, lon), clockwise from Cape Flattery.

Traces the international border through the Great Lakes, so US lake water is
inside the ring. Writes GeoJSON ([lon, lat] order) and reports the area.
"""
import json
import math
import sys

RING = [
    (48.38, -124.72), (48.30, -123.25), (48.75, -123.20), (49.00, -123.05),
    (49.00, -110.00), (49.00, -104.05), (49.00, -97.23), (49.00, -95.15),
    (49.38, -95.15), (49.32, -94.82), (48.70, -93.80), (48.60, -93.40),
    (48.50, -92.50), (48.10, -91.00), (48.20, -90.20), (48.00, -89.60),
    (48.30, -88.40), (47.40, -87.50), (46.70, -85.50), (46.50, -84.60),
    (46.10, -83.90), (45.90, -83.40), (45.30, -82.50), (44.00, -82.20),
    (43.00, -82.40), (42.60, -82.60), (42.30, -83.10), (42.00, -83.15),
    (41.70, -82.60), (42.00, -81.20), (42.30, -80.10), (42.80, -79.00),
    (43.00, -79.05), (43.30, -79.10), (43.60, -78.00), (43.60, -77.00),
    (44.10, -76.40), (44.40, -75.85), (45.00, -74.70), (45.01, -73.34),
    (45.01, -71.50), (45.30, -71.10), (45.90, -70.30), (46.40, -70.05),
    (47.45, -69.22), (47.35, -68.40), (47.07, -67.79), (46.00, -67.78),
    (45.20, -67.40), (44.81, -66.95), (44.40, -68.20), (43.90, -69.50),
    (43.60, -70.20), (43.07, -70.70), (42.70, -70.80), (42.40, -70.95),
    (42.05, -70.20), (41.55, -69.95), (41.55, -70.60), (41.45, -71.30),
    (41.30, -72.00), (41.05, -71.85), (40.60, -73.00), (40.55, -74.00),
    (40.10, -74.03), (39.35, -74.40), (38.93, -74.90), (38.80, -75.10),
    (38.45, -75.05), (37.90, -75.35), (37.10, -75.95), (36.90, -76.00),
    (36.50, -75.85), (35.95, -75.60), (35.20, -75.53), (34.70, -76.45),
    (34.60, -77.20), (33.90, -77.95), (33.60, -78.90), (32.80, -79.80),
    (32.05, -80.90), (31.10, -81.40), (30.40, -81.40), (29.20, -81.00),
    (28.45, -80.55), (27.20, -80.15), (26.00, -80.10), (25.50, -80.30),
    (25.15, -80.40), (25.20, -80.90), (25.80, -81.45), (26.50, -82.00),
    (27.30, -82.60), (27.90, -82.85), (28.80, -82.75), (29.20, -83.10),
    (29.95, -83.95), (29.90, -84.50), (29.70, -85.30), (30.20, -85.80),
    (30.40, -86.50), (30.35, -87.50), (30.25, -88.10), (30.35, -89.10),
    (30.10, -89.60), (29.60, -89.50), (29.00, -89.15), (29.20, -90.10),
    (29.30, -91.20), (29.55, -92.30), (29.75, -93.30), (29.70, -93.85),
    (29.30, -94.80), (28.70, -95.70), (28.10, -96.90), (27.60, -97.20),
    (26.80, -97.40), (25.96, -97.15), (26.05, -97.60), (26.40, -98.80),
    (27.50, -99.50), (28.70, -100.50), (29.80, -101.40), (29.60, -102.40),
    (29.10, -103.10), (29.00, -103.30), (29.60, -104.40), (30.70, -104.98),
    (31.40, -106.20), (31.78, -106.53), (31.78, -108.21), (31.33, -108.21),
    (31.33, -111.07), (32.49, -114.81), (32.72, -114.72), (32.53, -117.12),
    (33.00, -117.30), (33.50, -117.70), (33.75, -118.40), (34.00, -118.50),
    (34.40, -119.50), (34.45, -120.45), (35.20, -120.90), (36.30, -121.90),
    (36.60, -121.95), (37.20, -122.40), (37.80, -122.50), (38.30, -123.05),
    (38.95, -123.73), (40.00, -124.05), (40.44, -124.41), (41.00, -124.15),
    (42.00, -124.20), (42.84, -124.55), (43.70, -124.20), (44.60, -124.07),
    (46.20, -123.95), (46.90, -124.15), (47.90, -124.65),
]


def area_km2(ring):
    # equal-area sinusoidal projection about the ring's mean latitude
    r = 6371.0088
    pts = [(math.radians(lon) * r * math.cos(math.radians(lat)), math.radians(lat) * r)
           for lat, lon in ring]
    s = 0.0
    for (x1, y1), (x2, y2) in zip(pts, pts[1:] + pts[:1]):
        s += x1 * y2 - x2 * y1
    return abs(s) / 2


if __name__ == "__main__":
    print(f"vertices={len(RING)} area_km2={area_km2(RING):.0f}")
    if len(sys.argv) > 1:
        coords = [[lon, lat] for lat, lon in RING] + [[RING[0][1], RING[0][0]]]
        geo = {"type": "Feature", "properties": {"name": "conus"},
               "geometry": {"type": "Polygon", "coordinates": [coords]}}
        with open(sys.argv[1], "w") as fh:
            json.dump(geo, fh)
            fh.write("\n")
