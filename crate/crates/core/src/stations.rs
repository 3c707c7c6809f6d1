//! Station panels of monthly meteorological series: loading with station-mean
//! imputation, per-station tests on scalar series and regional field-level
//! tests that treat the stations as random observation locations.

use std::collections::{BTreeSet, HashMap};
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;

use crate::bootstrap::{bootstrap_test_dcor, format_float, TestConfig, TestResult};
use crate::distance::distance_matrix;
use crate::domain::{DcovParams, DiscretizationScheme, DistanceMatrix, FieldRealization, LocationSet};
use crate::error::{Error, Result};
use crate::fields::{FbsParams, GaussianFieldSampler, Purpose, RngStream, StreamId};

/// Exact header of station input files.
pub const STATION_HEADER: [&str; 9] = ["station_id", "lat", "lon", "region", "year", "month", "temp", "prec", "wind"];

/// Exact header of regional result files.
pub const RESULT_HEADER: [&str; 8] = ["region", "season", "pair", "R", "quantile", "reject", "n_months", "n_stations"];

const MISSING: &str = "NA";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Variable {
    Temp,
    Prec,
    Wind,
}

impl Variable {
    pub const ALL: [Variable; 3] = [Variable::Temp, Variable::Prec, Variable::Wind];

    fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Variable::Temp => "temp",
            Variable::Prec => "prec",
            Variable::Wind => "wind",
        }
    }
}

impl std::str::FromStr for Variable {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variable::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::config(format!("unknown variable {s:?}")))
    }
}

/// Two distinct variables, written `temp-prec`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VariablePair(pub Variable, pub Variable);

impl VariablePair {
    pub fn name(&self) -> String {
        format!("{}-{}", self.0.name(), self.1.name())
    }
}

impl std::str::FromStr for VariablePair {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (a, b) = s
            .split_once('-')
            .ok_or_else(|| Error::config(format!("variable pair must look like temp-prec, got {s:?}")))?;
        let pair = VariablePair(a.parse()?, b.parse()?);
        if pair.0 == pair.1 {
            return Err(Error::config(format!("variable pair {s:?} repeats a variable")));
        }
        Ok(pair)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Season {
    Winter,
    Spring,
    Summer,
    Autumn,
}

impl Season {
    pub const ALL: [Season; 4] = [Season::Winter, Season::Spring, Season::Summer, Season::Autumn];

    /// Meteorological season of a calendar month (1 = January).
    pub fn of_month(month: u32) -> Season {
        match month {
            12 | 1 | 2 => Season::Winter,
            3..=5 => Season::Spring,
            6..=8 => Season::Summer,
            _ => Season::Autumn,
        }
    }

    /// Year a season instance starts in; December opens the next winter.
    pub fn season_year(year: i32, month: u32) -> i32 {
        if month <= 2 {
            year - 1
        } else {
            year
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Season::Winter => "winter",
            Season::Spring => "spring",
            Season::Summer => "summer",
            Season::Autumn => "autumn",
        }
    }
}

impl std::str::FromStr for Season {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Season::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::config(format!("unknown season {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StationRecord {
    pub id: String,
    pub lat: f64,
    pub lon: f64,
    pub region: String,
    /// Imputed temp, prec and wind series, aligned with the panel months.
    series: [Vec<f64>; 3],
    /// Entries that were missing before imputation.
    missing: [Vec<bool>; 3],
}

impl StationRecord {
    pub fn series(&self, v: Variable) -> &[f64] {
        &self.series[v.index()]
    }

    pub fn was_missing(&self, v: Variable) -> &[bool] {
        &self.missing[v.index()]
    }
}

/// Station id, latitude, longitude, region and raw temp/prec/wind series.
pub type RawStation = (String, f64, f64, String, [Vec<Option<f64>>; 3]);

#[derive(Debug, Clone, PartialEq)]
pub struct StationPanel {
    stations: Vec<StationRecord>,
    months: Vec<(i32, u32)>,
    /// `(lon, lat)` mapped into `[0,1]^2` by the bounding box.
    coords: Vec<[f64; 2]>,
}

/// Replaces missing entries by the mean of the observed ones.
fn impute(values: &[Option<f64>]) -> Option<Vec<f64>> {
    let observed: Vec<f64> = values.iter().flatten().copied().collect();
    if observed.is_empty() {
        return None;
    }
    let mean = observed.iter().sum::<f64>() / observed.len() as f64;
    Some(values.iter().map(|v| v.unwrap_or(mean)).collect())
}

fn normalize(stations: &[StationRecord]) -> Vec<[f64; 2]> {
    let range = |f: fn(&StationRecord) -> f64| {
        stations
            .iter()
            .map(f)
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
    };
    let scale = |v: f64, (lo, hi): (f64, f64)| if hi > lo { ((v - lo) / (hi - lo)).clamp(0.0, 1.0) } else { 0.5 };
    let (lon, lat) = (range(|s| s.lon), range(|s| s.lat));
    stations.iter().map(|s| [scale(s.lon, lon), scale(s.lat, lat)]).collect()
}

impl StationPanel {
    /// Builds a panel from raw series (`None` = missing), imputing by station means.
    pub fn from_raw(
        stations: Vec<RawStation>,
        months: Vec<(i32, u32)>,
    ) -> Result<Self> {
        if stations.is_empty() {
            return Err(Error::data("panel has no stations"));
        }
        let mut records = Vec::with_capacity(stations.len());
        for (id, lat, lon, region, raw) in stations {
            if !(lat.is_finite() && lon.is_finite()) {
                return Err(Error::data(format!("station {id}: non-finite coordinates")));
            }
            let mut series: [Vec<f64>; 3] = Default::default();
            let mut missing: [Vec<bool>; 3] = Default::default();
            for v in Variable::ALL {
                let values = &raw[v.index()];
                if values.len() != months.len() {
                    return Err(Error::data(format!(
                        "station {id}: {} series has {} months, panel has {}",
                        v.name(),
                        values.len(),
                        months.len()
                    )));
                }
                series[v.index()] = impute(values)
                    .ok_or_else(|| Error::data(format!("station {id}: variable {} is missing in every month", v.name())))?;
                missing[v.index()] = values.iter().map(Option::is_none).collect();
            }
            records.push(StationRecord {
                id,
                lat,
                lon,
                region,
                series,
                missing,
            });
        }
        let coords = normalize(&records);
        Ok(Self {
            stations: records,
            months,
            coords,
        })
    }

    pub fn stations(&self) -> &[StationRecord] {
        &self.stations
    }

    pub fn months(&self) -> &[(i32, u32)] {
        &self.months
    }

    pub fn coords(&self) -> &[[f64; 2]] {
        &self.coords
    }

    /// Distinct region tags in order of first appearance.
    pub fn regions(&self) -> Vec<String> {
        let mut seen = BTreeSet::new();
        self.stations
            .iter()
            .filter(|s| seen.insert(s.region.clone()))
            .map(|s| s.region.clone())
            .collect()
    }
}

/// Reads a station CSV (see [`STATION_HEADER`]); stations are kept in order
/// of first appearance and months sorted; absent station-months are missing.
pub fn load_stations(path: &Path) -> Result<StationPanel> {
    let parse_err = |line: usize, msg: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    };
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
    let header = reader.headers()?.clone();
    if header.iter().map(str::trim).ne(STATION_HEADER.iter().copied()) {
        return Err(parse_err(1, format!("header must be {}", STATION_HEADER.join(","))));
    }

    struct Raw {
        lat: f64,
        lon: f64,
        region: String,
        values: HashMap<(i32, u32), [Option<f64>; 3]>,
    }
    let mut order: Vec<String> = Vec::new();
    let mut raw: HashMap<String, Raw> = HashMap::new();
    let mut months = BTreeSet::new();
    for row in reader.records() {
        let row = row?;
        let line = row.position().map_or(0, |p| p.line() as usize);
        if row.len() != STATION_HEADER.len() {
            return Err(parse_err(line, format!("expected {} fields, got {}", STATION_HEADER.len(), row.len())));
        }
        let field = |i: usize| row[i].trim();
        let number = |i: usize| -> Result<f64> {
            field(i)
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| parse_err(line, format!("invalid {} value {:?}", STATION_HEADER[i], field(i))))
        };
        let reading = |i: usize| -> Result<Option<f64>> {
            if field(i) == MISSING || field(i).is_empty() {
                Ok(None)
            } else {
                number(i).map(Some)
            }
        };
        let id = field(0).to_string();
        if id.is_empty() {
            return Err(parse_err(line, "empty station_id".to_string()));
        }
        let (lat, lon) = (number(1)?, number(2)?);
        let year: i32 = field(4)
            .parse()
            .map_err(|_| parse_err(line, format!("invalid year {:?}", field(4))))?;
        let month: u32 = field(5)
            .parse()
            .ok()
            .filter(|m| (1..=12).contains(m))
            .ok_or_else(|| parse_err(line, format!("invalid month {:?}", field(5))))?;
        let readings = [reading(6)?, reading(7)?, reading(8)?];
        let entry = raw.entry(id.clone()).or_insert_with(|| {
            order.push(id.clone());
            Raw {
                lat,
                lon,
                region: field(3).to_string(),
                values: HashMap::new(),
            }
        });
        if entry.lat != lat || entry.lon != lon || entry.region != field(3) {
            return Err(parse_err(line, format!("station {id}: coordinates or region differ from its first row")));
        }
        if entry.values.insert((year, month), readings).is_some() {
            return Err(parse_err(line, format!("station {id}: duplicate row for {year}-{month:02}")));
        }
        months.insert((year, month));
    }
    let months: Vec<(i32, u32)> = months.into_iter().collect();
    let stations = order
        .into_iter()
        .map(|id| {
            let r = raw.remove(&id).expect("station recorded");
            let series = std::array::from_fn(|v| {
                months.iter().map(|m| r.values.get(m).and_then(|x| x[v])).collect()
            });
            (id, r.lat, r.lon, r.region, series)
        })
        .collect();
    StationPanel::from_raw(stations, months)
}

/// Writes the panel in the input format; entries that were imputed are
/// written back as `NA`.
pub fn write_panel<W: Write>(panel: &StationPanel, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(STATION_HEADER)?;
    for s in &panel.stations {
        for (t, &(year, month)) in panel.months.iter().enumerate() {
            let value = |v: Variable| {
                if s.missing[v.index()][t] {
                    MISSING.to_string()
                } else {
                    format!("{:?}", s.series[v.index()][t])
                }
            };
            w.write_record([
                s.id.clone(),
                format!("{:?}", s.lat),
                format!("{:?}", s.lon),
                s.region.clone(),
                year.to_string(),
                month.to_string(),
                value(Variable::Temp),
                value(Variable::Prec),
                value(Variable::Wind),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug)]
pub struct StationTest {
    pub station: String,
    pub result: Result<TestResult>,
}

#[derive(Debug)]
pub struct PerStationSummary {
    pub tests: Vec<StationTest>,
    /// Stations whose test rejected; failed or undefined tests count as non-rejections.
    pub rejections: usize,
}

/// Bootstrap test of the two monthly series of every station, treated as
/// `n = months` scalar observations. Station `i` uses resampling streams of
/// trial `i`.
pub fn per_station_tests(
    panel: &StationPanel,
    pair: VariablePair,
    cfg: &TestConfig,
    params: DcovParams,
) -> PerStationSummary {
    let tests: Vec<StationTest> = panel
        .stations
        .par_iter()
        .enumerate()
        .map(|(i, s)| {
            let result = DistanceMatrix::from_scalars(s.series(pair.0), params).and_then(|dx| {
                let dy = DistanceMatrix::from_scalars(s.series(pair.1), params)?;
                bootstrap_test_dcor(&dx, &dy, &cfg.with_trial(i as u64))
            });
            StationTest {
                station: s.id.clone(),
                result,
            }
        })
        .collect();
    let rejections = tests
        .iter()
        .filter(|t| t.result.as_ref().is_ok_and(|r| r.reject))
        .count();
    PerStationSummary { tests, rejections }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegionalResult {
    pub region: Option<String>,
    pub season: Option<Season>,
    pub pair: VariablePair,
    /// Sample distance correlation of the filtered panel; `NaN` if undefined.
    pub r: f64,
    pub test: TestResult,
    pub n_months: usize,
    pub n_stations: usize,
}

impl RegionalResult {
    pub fn record(&self) -> [String; 8] {
        [
            self.region.clone().unwrap_or_else(|| "all".to_string()),
            self.season.map_or("all", Season::name).to_string(),
            self.pair.name(),
            format_float(self.r),
            format_float(self.test.quantile),
            u8::from(self.test.reject).to_string(),
            self.n_months.to_string(),
            self.n_stations.to_string(),
        ]
    }
}

pub fn write_regional_results<W: Write>(out: W, results: &[RegionalResult]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(RESULT_HEADER)?;
    for r in results {
        w.write_record(r.record())?;
    }
    w.flush()?;
    Ok(())
}

/// Field-level test: each selected month is one paired observation of two
/// fields read at the selected stations, compared under the random-location
/// norm with `N_p` = station count.
pub fn regional_field_test(
    panel: &StationPanel,
    region: Option<&str>,
    season: Option<Season>,
    pair: VariablePair,
    cfg: &TestConfig,
    params: DcovParams,
) -> Result<RegionalResult> {
    let stations: Vec<usize> = (0..panel.stations.len())
        .filter(|&i| region.is_none_or(|r| panel.stations[i].region == r))
        .collect();
    let months: Vec<usize> = (0..panel.months.len())
        .filter(|&t| season.is_none_or(|s| Season::of_month(panel.months[t].1) == s))
        .collect();
    let label = format!("region {}, season {}", region.unwrap_or("all"), season.map_or("all", Season::name));
    if stations.len() < 2 {
        return Err(Error::config(format!("{label}: need at least 2 stations, found {}", stations.len())));
    }
    if months.len() < 4 {
        return Err(Error::config(format!("{label}: need at least 4 months, found {}", months.len())));
    }
    let points = stations.iter().map(|&i| panel.coords[i].to_vec()).collect();
    let scheme = DiscretizationScheme::Locations(LocationSet::new(2, points, stations.len() as f64)?);
    let fields = |v: Variable| -> Vec<FieldRealization> {
        months
            .iter()
            .map(|&t| FieldRealization::new(stations.iter().map(|&i| panel.stations[i].series(v)[t]).collect()))
            .collect()
    };
    let dx = distance_matrix(&fields(pair.0), &scheme, params)?;
    let dy = distance_matrix(&fields(pair.1), &scheme, params)?;
    let test = bootstrap_test_dcor(&dx, &dy, cfg)?;
    Ok(RegionalResult {
        region: region.map(str::to_string),
        season,
        pair,
        r: test.statistic,
        test,
        n_months: months.len(),
        n_stations: stations.len(),
    })
}

/// Shape of a synthetic panel. Temperature is a Brownian sheet over the
/// normalized station coordinates; precipitation is `rho temp + sqrt(1 -
/// rho^2)` times an independent copy; wind is independent of both.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticPanelSpec {
    pub stations: usize,
    pub months: usize,
    pub rho: f64,
    pub regions: usize,
}

/// Synthetic panel `index` for `seed`; monthly readings start in January 2000.
pub fn synthetic_panel(spec: &SyntheticPanelSpec, seed: u64, index: u64) -> Result<StationPanel> {
    if spec.stations < 2 || spec.months < 1 || spec.regions < 1 {
        return Err(Error::config("synthetic panel needs >= 2 stations, >= 1 month and >= 1 region"));
    }
    if !(0.0..=1.0).contains(&spec.rho) {
        return Err(Error::config(format!("rho must lie in [0, 1], got {}", spec.rho)));
    }
    use rand::Rng;
    let mut rng = RngStream::new(seed, StreamId::new(index, Purpose::Panel));
    let sites: Vec<Vec<f64>> = (0..spec.stations).map(|_| vec![rng.random(), rng.random()]).collect();
    let brownian = FbsParams::brownian(2);
    let sampler = GaussianFieldSampler::new(&sites, |s, t| brownian.covariance(s, t))?;
    let draw = |purpose| {
        let mut r = RngStream::new(seed, StreamId::new(index, purpose));
        sampler.sample_many(spec.months, &mut r)
    };
    let (temp, other, wind) = (draw(Purpose::FieldX), draw(Purpose::FieldXPrime), draw(Purpose::FieldY));
    let w = (1.0 - spec.rho * spec.rho).sqrt();
    let months = (0..spec.months).map(|t| (2000 + (t / 12) as i32, (t % 12) as u32 + 1)).collect();
    let stations = sites
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let column = |fields: &[FieldRealization]| fields.iter().map(|f| f.values()[i]).collect::<Vec<f64>>();
            let (t, o, wd) = (column(&temp), column(&other), column(&wind));
            let prec = t.iter().zip(&o).map(|(a, b)| spec.rho * a + w * b).collect::<Vec<f64>>();
            let wrap = |v: Vec<f64>| v.into_iter().map(Some).collect::<Vec<_>>();
            (
                format!("S{i:04}"),
                30.0 + 15.0 * s[1],
                129.0 + 17.0 * s[0],
                format!("R{}", i % spec.regions + 1),
                [wrap(t), wrap(prec), wrap(wd)],
            )
        })
        .collect();
    StationPanel::from_raw(stations, months)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bootstrap::TestVariant;

    fn cfg() -> TestConfig {
        TestConfig::new(100, 0.05, TestVariant::DcorResample, 3).unwrap()
    }

    fn write_file(dir: &Path, text: &str) -> std::path::PathBuf {
        let path = dir.join("stations.csv");
        std::fs::File::create(&path).unwrap().write_all(text.as_bytes()).unwrap();
        path
    }

    const SMALL: &str = "station_id,lat,lon,region,year,month,temp,prec,wind
A,35.0,139.0,Kanto,2000,1,1,10,3
A,35.0,139.0,Kanto,2000,2,NA,20,3
A,35.0,139.0,Kanto,2000,3,3,NA,4
B,43.0,141.0,Hokkaido,2000,1,-5,30,6
B,43.0,141.0,Hokkaido,2000,2,-4,NA,7
B,43.0,141.0,Hokkaido,2000,3,0.5,50,8
";

    #[test]
    fn imputation_by_station_mean() {
        let dir = tempfile::tempdir().unwrap();
        let panel = load_stations(&write_file(dir.path(), SMALL)).unwrap();
        assert_eq!(panel.stations().len(), 2);
        let a = &panel.stations()[0];
        assert_eq!(a.series(Variable::Temp), &[1.0, 2.0, 3.0]);
        assert_eq!(a.series(Variable::Prec), &[10.0, 20.0, 15.0]);
        assert_eq!(a.was_missing(Variable::Temp), &[false, true, false]);
        assert_eq!(panel.months(), &[(2000, 1), (2000, 2), (2000, 3)]);
        assert_eq!(panel.coords()[0], [0.0, 0.0]);
        assert_eq!(panel.coords()[1], [1.0, 1.0]);
        assert_eq!(panel.regions(), vec!["Kanto".to_string(), "Hokkaido".to_string()]);
    }

    #[test]
    fn empty_cells_are_missing() {
        let dir = tempfile::tempdir().unwrap();
        let na = load_stations(&write_file(dir.path(), SMALL)).unwrap();
        let empty = load_stations(&write_file(dir.path(), &SMALL.replace("NA", ""))).unwrap();
        assert_eq!(na, empty);
    }

    #[test]
    fn round_trip_keeps_observed_values() {
        let dir = tempfile::tempdir().unwrap();
        let panel = load_stations(&write_file(dir.path(), SMALL)).unwrap();
        let mut buf = Vec::new();
        write_panel(&panel, &mut buf).unwrap();
        let again_path = dir.path().join("again.csv");
        std::fs::write(&again_path, &buf).unwrap();
        let again = load_stations(&again_path).unwrap();
        assert_eq!(panel, again);
    }

    #[test]
    fn load_errors() {
        let dir = tempfile::tempdir().unwrap();
        let empty = write_file(dir.path(), "station_id,lat,lon,region,year,month,temp,prec,wind\n");
        assert!(matches!(load_stations(&empty), Err(Error::Data(_))));

        let bad = SMALL.replace("2000,3,3,NA,4", "2000,3,x,NA,4");
        let path = write_file(dir.path(), &bad);
        match load_stations(&path) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 4),
            other => panic!("{other:?}"),
        }

        let all_missing = SMALL.replace(",10,3", ",NA,3").replace(",20,3", ",NA,3");
        let path = write_file(dir.path(), &all_missing);
        match load_stations(&path) {
            Err(Error::Data(msg)) => assert!(msg.contains("station A") && msg.contains("prec"), "{msg}"),
            other => panic!("{other:?}"),
        }

        let path = write_file(dir.path(), "id,lat\n");
        assert!(matches!(load_stations(&path), Err(Error::Parse { line: 1, .. })));

        let dup = format!("{SMALL}A,35.0,139.0,Kanto,2000,1,1,10,3\n");
        let path = write_file(dir.path(), &dup);
        assert!(matches!(load_stations(&path), Err(Error::Parse { line: 8, .. })));
    }

    #[test]
    fn seasons_partition_the_year() {
        for m in 1..=12 {
            let hits = Season::ALL.iter().filter(|&&s| Season::of_month(m) == s).count();
            assert_eq!(hits, 1);
        }
        let winter: Vec<u32> = (1..=12).filter(|&m| Season::of_month(m) == Season::Winter).collect();
        assert_eq!(winter, vec![1, 2, 12]);
        assert_eq!(Season::season_year(2001, 12), 2001);
        assert_eq!(Season::season_year(2002, 1), 2001);
        assert_eq!(Season::season_year(2002, 3), 2002);
    }

    #[test]
    fn pair_parsing() {
        let p: VariablePair = "temp-prec".parse().unwrap();
        assert_eq!(p, VariablePair(Variable::Temp, Variable::Prec));
        assert_eq!(p.name(), "temp-prec");
        assert!("temp-temp".parse::<VariablePair>().is_err());
        assert!("temp".parse::<VariablePair>().is_err());
    }

    fn spec(stations: usize, months: usize, rho: f64) -> SyntheticPanelSpec {
        SyntheticPanelSpec {
            stations,
            months,
            rho,
            regions: 3,
        }
    }

    #[test]
    fn per_station_perfect_dependence_and_constants() {
        let panel = synthetic_panel(&spec(12, 60, 1.0), 1, 0).unwrap();
        let pair = VariablePair(Variable::Temp, Variable::Prec);
        let summary = per_station_tests(&panel, pair, &cfg(), DcovParams::default());
        assert_eq!(summary.rejections, 12);

        let constant = StationPanel::from_raw(
            vec![(
                "C".to_string(),
                1.0,
                1.0,
                "X".to_string(),
                [vec![Some(2.0); 8], (0..8).map(|i| Some(i as f64)).collect(), vec![Some(0.0); 8]],
            )],
            (1..=8).map(|m| (2000, m)).collect(),
        )
        .unwrap();
        let summary = per_station_tests(&constant, pair, &cfg(), DcovParams::default());
        assert_eq!(summary.rejections, 0);
        assert!(summary.tests[0].result.as_ref().unwrap().undefined);
    }

    #[test]
    fn season_filter_and_errors() {
        let panel = synthetic_panel(&spec(6, 36, 0.0), 2, 0).unwrap();
        let pair = VariablePair(Variable::Temp, Variable::Prec);
        let r = regional_field_test(&panel, None, Some(Season::Winter), pair, &cfg(), DcovParams::default()).unwrap();
        assert_eq!(r.n_months, 9);
        assert_eq!(r.n_stations, 6);
        assert!(matches!(
            regional_field_test(&panel, Some("nowhere"), None, pair, &cfg(), DcovParams::default()),
            Err(Error::Config(_))
        ));
        let r1 = regional_field_test(&panel, Some("R1"), None, pair, &cfg(), DcovParams::default()).unwrap();
        assert_eq!(r1.n_stations, 2);
    }

    #[test]
    fn all_pass_filter_is_the_whole_panel() {
        let panel = synthetic_panel(&spec(8, 40, 0.3), 3, 0).unwrap();
        let pair = VariablePair(Variable::Temp, Variable::Prec);
        let a = regional_field_test(&panel, None, None, pair, &cfg(), DcovParams::default()).unwrap();
        let b = regional_field_test(&panel, None, None, pair, &cfg(), DcovParams::default()).unwrap();
        assert_eq!(a, b);
        assert_eq!((a.n_months, a.n_stations), (40, 8));
    }

    #[test]
    fn duplicated_stations_leave_r_unchanged() {
        let panel = synthetic_panel(&spec(10, 30, 0.5), 4, 0).unwrap();
        let doubled = StationPanel::from_raw(
            panel
                .stations()
                .iter()
                .chain(panel.stations())
                .map(|s| {
                    let raw = |v: Variable| s.series(v).iter().map(|&x| Some(x)).collect();
                    (s.id.clone(), s.lat, s.lon, s.region.clone(), [raw(Variable::Temp), raw(Variable::Prec), raw(Variable::Wind)])
                })
                .collect(),
            panel.months().to_vec(),
        )
        .unwrap();
        let pair = VariablePair(Variable::Temp, Variable::Prec);
        let a = regional_field_test(&panel, None, None, pair, &cfg(), DcovParams::default()).unwrap();
        let b = regional_field_test(&doubled, None, None, pair, &cfg(), DcovParams::default()).unwrap();
        assert!((a.r - b.r).abs() < 1e-12, "{} vs {}", a.r, b.r);
    }

    #[test]
    fn result_csv_layout() {
        let panel = synthetic_panel(&spec(5, 20, 0.0), 5, 0).unwrap();
        let pair = VariablePair(Variable::Prec, Variable::Wind);
        let r = regional_field_test(&panel, None, Some(Season::Summer), pair, &cfg(), DcovParams::default()).unwrap();
        let mut buf = Vec::new();
        write_regional_results(&mut buf, &[r]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "region,season,pair,R,quantile,reject,n_months,n_stations");
        assert!(lines[1].starts_with("all,summer,prec-wind,"));
        assert!(lines[1].ends_with(",6,5"));
    }
}
