import numpy as np
import pandas as pd
import pytest

from searchcast import geo, ingest
from searchcast.exceptions import GapError, IncompleteWeek, NotAState, OrderError, ParseError


def write(path, text):
    path.write_text(text)
    return path


def test_cumulative_to_increments(tmp_path):
    p = write(tmp_path / "s.csv", "date,state,cases,deaths\n2020-07-01,NY,100,10\n2020-07-02,NY,130,12\n")
    panel = ingest.load_surveillance(p)
    assert panel.deaths[0].tolist() == [10, 2]
    assert panel.cases[0].tolist() == [100, 30]


def test_revision_gives_negative_increment(tmp_path):
    p = write(tmp_path / "s.csv", "date,state,cases,deaths\n2020-07-01,NY,1,10\n2020-07-02,NY,1,9\n")
    assert ingest.load_surveillance(p).deaths[0].tolist() == [10, -1]


def test_gap_rejected(tmp_path):
    p = write(tmp_path / "s.csv", "date,state,cases,deaths\n2020-07-01,NY,1,10\n2020-07-03,NY,1,12\n")
    with pytest.raises(GapError):
        ingest.load_surveillance(p)


def test_parse_and_order_errors(tmp_path):
    p = write(tmp_path / "a.csv", "date,state,cases,deaths\n2020-07-01,NY,1,x\n")
    with pytest.raises(ParseError) as e:
        ingest.load_surveillance(p)
    assert e.value.line == 2
    p = write(tmp_path / "b.csv", "date,state,cases,deaths\n2020-07-02,NY,1,1\n2020-07-01,NY,1,1\n")
    with pytest.raises(OrderError):
        ingest.load_surveillance(p)
    p = write(tmp_path / "c.csv", "day,state,cases,deaths\n2020-07-01,NY,1,1\n")
    with pytest.raises(ParseError):
        ingest.load_surveillance(p)
    with pytest.raises(FileNotFoundError):
        ingest.load_surveillance(tmp_path / "missing.csv")


def test_late_starting_state_is_zero_before_first_row(tmp_path):
    p = write(tmp_path / "s.csv", "date,state,cases,deaths\n2020-07-01,NY,1,1\n2020-07-02,NY,2,2\n"
              "2020-07-02,New Jersey,5,3\n")
    panel = ingest.load_surveillance(p)
    assert panel.geos == ["NJ", "NY"]
    assert panel.deaths[0].tolist() == [0, 3]


def test_nation_and_regions(tmp_path):
    p = write(tmp_path / "s.csv", "date,state,cases,deaths\n2020-07-01,NY,1,4\n2020-07-01,NJ,1,5\n")
    feed = ingest.assemble_feed(ingest.load_surveillance(p))
    assert feed.series("R02").iloc[0] == 9
    assert feed.series("US").iloc[0] == 9
    assert feed.series("GA").iloc[0] == 0


def build_query_csv(tmp_path, rows):
    return write(tmp_path / "q.csv", "date,geo,query,value\n" + "".join(f"{r}\n" for r in rows))


def test_query_regional_sum_and_missing_cells(tmp_path):
    p = build_query_csv(tmp_path, ["2020-07-01,NY,q,3", "2020-07-01,NJ,q,5", "2020-07-02,NY,q,1"])
    panel = ingest.load_query_panel(p)
    assert panel.series("R02", "q").tolist() == [8, 1]
    assert panel.series("NJ", "q").tolist() == [5, 0]
    assert panel.series("US", "q").tolist() == [8, 1]


def test_query_fields_tolerate_padding(tmp_path):
    p = build_query_csv(tmp_path, [" 2020-07-01, NY ,q , 3", "2020-07-01,NY, q,2 ", "2020-07-02,NY,q,1"])
    with pytest.raises(ParseError):
        ingest.load_query_panel(p)  # the first two rows name the same cell
    p = build_query_csv(tmp_path, [" 2020-07-01, NY ,q , 3", "2020-07-02,NJ, q,2 "])
    panel = ingest.load_query_panel(p)
    assert panel.queries == ["q"]
    assert panel.series("NY", "q").tolist() == [3, 0]
    assert panel.series("NJ", "q").tolist() == [0, 2]


def test_query_errors(tmp_path):
    with pytest.raises(ValueError):
        ingest.load_query_panel(build_query_csv(tmp_path, ["2020-07-01,NY,q,-1"]))
    with pytest.raises(NotAState):
        ingest.load_query_panel(build_query_csv(tmp_path, ["2020-07-01,ZZ,q,1"]))


def daily_panel(values, start="2020-06-28"):
    dates = pd.date_range(start, periods=len(values), freq="D")
    v = np.asarray(values, float)[None]
    return ingest.SurveillancePanel(dates, ["NY"], v, np.zeros_like(v))


@pytest.mark.parametrize("week,expected", [
    ([1] * 7, 7), ([0] * 7, 0), ([0, 0, 0, 0, 0, 0, -2], -2),
])
def test_persistence(week, expected):
    panel = daily_panel(week)  # 2020-06-28 is a Sunday
    assert ingest.persistence_forecast(panel, "NY", geo.week_of("2020-07-04")).tolist() == [expected] * 4


def test_persistence_incomplete_week():
    with pytest.raises(IncompleteWeek):
        ingest.persistence_forecast(daily_panel([1] * 6), "NY", geo.week_of("2020-07-04"))


def test_weekly_sums_complete_weeks_only():
    panel = daily_panel(np.arange(1, 20), start="2020-06-27")  # Saturday start
    w = panel.weekly()
    assert list(w.index.strftime("%Y-%m-%d")) == ["2020-07-04", "2020-07-11"]
    assert w["NY"].tolist() == [sum(range(2, 9)), sum(range(9, 16))]


def test_load_is_deterministic(tmp_path):
    p = write(tmp_path / "s.csv", "date,state,cases,deaths\n2020-07-01,NY,1,4\n2020-07-02,NY,3,6\n")
    a, b = ingest.load_surveillance(p), ingest.load_surveillance(p)
    assert np.array_equal(a.deaths, b.deaths) and a.dates.equals(b.dates)
