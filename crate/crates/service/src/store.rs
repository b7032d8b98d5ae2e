//! Images and sessions held by a running service, with per-session
//! append-only JSONL logs that are replayed on startup.

use std::collections::{BTreeMap, HashMap};
use std::fs::{self, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, RwLock};
use std::time::{SystemTime, UNIX_EPOCH};

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use robotseg_core::dataset::{
    downscale_max, label_map_from_gray, label_map_to_gray, load_dataset, resize_nearest,
    rgb_from_image, rgb_to_image, trimap_from_gray, trimap_to_gray, DatasetRecord, MAX_HEIGHT,
    MAX_WIDTH,
};
use robotseg_core::grid::{LabelMap, RgbImage, Trimap};
use robotseg_core::robot::InteractionTrace;
use serde::{Deserialize, Serialize};
use tokio::sync::Mutex;

use crate::error::ServiceError;
use crate::session::{
    replay, CreateSession, ReplayRequest, SessionRecord, SessionView, StrokeInput, StrokeResponse,
};

#[derive(Clone, Debug)]
pub struct ImageEntry {
    pub name: String,
    pub image: Arc<RgbImage>,
    pub gt: Option<LabelMap>,
    pub brush: Option<Trimap>,
    pub uploaded: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImageInfo {
    pub name: String,
    pub width: usize,
    pub height: usize,
    pub has_gt: bool,
    pub has_strokes: bool,
    pub uploaded: bool,
}

impl ImageEntry {
    fn info(&self) -> ImageInfo {
        ImageInfo {
            name: self.name.clone(),
            width: self.image.width(),
            height: self.image.height(),
            has_gt: self.gt.is_some(),
            has_strokes: self.brush.is_some(),
            uploaded: self.uploaded,
        }
    }
}

impl From<DatasetRecord> for ImageEntry {
    fn from(r: DatasetRecord) -> Self {
        Self {
            name: r.name,
            image: r.image,
            gt: Some(r.gt),
            brush: Some(r.brush),
            uploaded: false,
        }
    }
}

/// Base64 PNGs; masks are resized with the image when it is downscaled.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct UploadRequest {
    pub name: String,
    pub png: String,
    #[serde(default)]
    pub gt_png: Option<String>,
    #[serde(default)]
    pub brush_png: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum LogEntry {
    Create {
        id: String,
        created_at: u64,
        request: CreateSession,
    },
    Stroke {
        stroke: StrokeInput,
    },
}

type Shared = Arc<Mutex<SessionRecord>>;

pub struct Store {
    images: RwLock<BTreeMap<String, Arc<ImageEntry>>>,
    sessions: RwLock<HashMap<String, Shared>>,
    state_dir: Option<PathBuf>,
}

fn storage(e: impl std::fmt::Display) -> ServiceError {
    ServiceError::Storage(e.to_string())
}

fn decode_png(b64: &str) -> Result<image::DynamicImage, ServiceError> {
    let bytes = STANDARD
        .decode(b64)
        .map_err(|e| ServiceError::Invalid(format!("bad base64: {e}")))?;
    image::load_from_memory(&bytes).map_err(|e| ServiceError::Invalid(format!("bad PNG: {e}")))
}

fn valid_name(name: &str) -> bool {
    !name.is_empty()
        && name.len() <= 64
        && name
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
}

fn now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_secs())
}

impl Store {
    /// An empty store; `state_dir` enables persistence.
    pub fn new(state_dir: Option<PathBuf>) -> Self {
        Self {
            images: RwLock::new(BTreeMap::new()),
            sessions: RwLock::new(HashMap::new()),
            state_dir,
        }
    }

    /// Loads the dataset, previous uploads and previous sessions.
    pub fn open(dataset: Option<&Path>, state_dir: Option<PathBuf>) -> Result<Self, ServiceError> {
        let records = match dataset {
            Some(root) => load_dataset(root)?,
            None => Vec::new(),
        };
        Self::from_records(records, state_dir)
    }

    /// Like [`Store::open`] with the dataset already in memory.
    pub fn from_records(
        records: Vec<DatasetRecord>,
        state_dir: Option<PathBuf>,
    ) -> Result<Self, ServiceError> {
        let store = Self::new(state_dir);
        store.add_records(records);
        store.load_uploads()?;
        store.load_sessions()?;
        Ok(store)
    }

    pub fn add_records(&self, records: impl IntoIterator<Item = DatasetRecord>) {
        let mut images = self.images.write().expect("image lock");
        for r in records {
            images.insert(r.name.clone(), Arc::new(r.into()));
        }
    }

    pub fn list_images(&self) -> Vec<ImageInfo> {
        self.images
            .read()
            .expect("image lock")
            .values()
            .map(|e| e.info())
            .collect()
    }

    fn image(&self, name: &str) -> Result<Arc<ImageEntry>, ServiceError> {
        self.images
            .read()
            .expect("image lock")
            .get(name)
            .cloned()
            .ok_or_else(|| ServiceError::NotFound(format!("image {name}")))
    }

    fn upload_dir(&self) -> Option<PathBuf> {
        self.state_dir.as_ref().map(|d| d.join("images"))
    }

    fn session_dir(&self) -> Option<PathBuf> {
        self.state_dir.as_ref().map(|d| d.join("sessions"))
    }

    pub fn upload_image(&self, req: &UploadRequest) -> Result<ImageInfo, ServiceError> {
        if !valid_name(&req.name) {
            return Err(ServiceError::Invalid(format!(
                "image name {:?} must be 1-64 letters, digits, '-' or '_'",
                req.name
            )));
        }
        if self
            .images
            .read()
            .expect("image lock")
            .contains_key(&req.name)
        {
            return Err(ServiceError::Invalid(format!(
                "image {} already exists",
                req.name
            )));
        }
        let full = rgb_from_image(&decode_png(&req.png)?.to_rgb8());
        let image = downscale_max(&full, MAX_WIDTH, MAX_HEIGHT);
        let (w, h) = (image.width(), image.height());
        let fit = |m: &image::DynamicImage, what: &str| {
            if (m.width() as usize, m.height() as usize) != (full.width(), full.height()) {
                return Err(ServiceError::Invalid(format!(
                    "{what} size differs from the image"
                )));
            }
            Ok(m.to_luma8())
        };
        let gt = match &req.gt_png {
            Some(b) => Some(resize_nearest(
                &label_map_from_gray(&fit(&decode_png(b)?, "gt")?),
                w,
                h,
            )),
            None => None,
        };
        let brush = match &req.brush_png {
            Some(b) => Some(resize_nearest(
                &trimap_from_gray(&fit(&decode_png(b)?, "brush")?),
                w,
                h,
            )),
            None => None,
        };
        let entry = ImageEntry {
            name: req.name.clone(),
            image: Arc::new(image),
            gt,
            brush,
            uploaded: true,
        };
        if let Some(dir) = self.upload_dir() {
            fs::create_dir_all(&dir)?;
            rgb_to_image(&entry.image)
                .save(dir.join(format!("{}.img.png", entry.name)))
                .map_err(storage)?;
            if let Some(gt) = &entry.gt {
                label_map_to_gray(gt)
                    .save(dir.join(format!("{}.gt.png", entry.name)))
                    .map_err(storage)?;
            }
            if let Some(b) = &entry.brush {
                trimap_to_gray(b)
                    .save(dir.join(format!("{}.brush.png", entry.name)))
                    .map_err(storage)?;
            }
        }
        let info = entry.info();
        self.images
            .write()
            .expect("image lock")
            .insert(entry.name.clone(), Arc::new(entry));
        Ok(info)
    }

    fn load_uploads(&self) -> Result<(), ServiceError> {
        let Some(dir) = self.upload_dir().filter(|d| d.is_dir()) else {
            return Ok(());
        };
        let mut names: Vec<String> = fs::read_dir(&dir)?
            .filter_map(|e| {
                e.ok()?
                    .file_name()
                    .to_str()?
                    .strip_suffix(".img.png")
                    .map(String::from)
            })
            .collect();
        names.sort();
        for name in names {
            let open = |kind: &str| -> Result<Option<image::DynamicImage>, ServiceError> {
                let p = dir.join(format!("{name}.{kind}.png"));
                if p.exists() {
                    Ok(Some(image::open(&p).map_err(storage)?))
                } else {
                    Ok(None)
                }
            };
            let image = rgb_from_image(&open("img")?.expect("listed").to_rgb8());
            let entry = ImageEntry {
                name: name.clone(),
                image: Arc::new(image),
                gt: open("gt")?.map(|g| label_map_from_gray(&g.to_luma8())),
                brush: open("brush")?.map(|g| trimap_from_gray(&g.to_luma8())),
                uploaded: true,
            };
            self.images
                .write()
                .expect("image lock")
                .insert(name, Arc::new(entry));
        }
        Ok(())
    }

    fn build(
        &self,
        id: String,
        request: CreateSession,
        created_at: u64,
    ) -> Result<SessionRecord, ServiceError> {
        let img = self.image(&request.image)?;
        let initial = match (&img.brush, request.initial_strokes) {
            (Some(b), true) => b.clone(),
            _ => Trimap::unlabeled(img.image.width(), img.image.height()),
        };
        SessionRecord::new(
            id,
            request,
            created_at,
            img.image.clone(),
            img.gt.clone(),
            initial,
        )
    }

    fn append(&self, id: &str, entry: &LogEntry) -> Result<(), ServiceError> {
        let Some(dir) = self.session_dir() else {
            return Ok(());
        };
        fs::create_dir_all(&dir)?;
        let mut f = OpenOptions::new()
            .create(true)
            .append(true)
            .open(dir.join(format!("{id}.jsonl")))?;
        let line = serde_json::to_string(entry).map_err(storage)?;
        writeln!(f, "{line}")?;
        Ok(())
    }

    fn load_sessions(&self) -> Result<(), ServiceError> {
        let Some(dir) = self.session_dir().filter(|d| d.is_dir()) else {
            return Ok(());
        };
        for e in fs::read_dir(&dir)? {
            let path = e?.path();
            if path.extension().is_none_or(|x| x != "jsonl") {
                continue;
            }
            match self.replay_log(&path) {
                Ok(rec) => {
                    tracing::info!(id = %rec.id, strokes = rec.view().trace.len(), "session restored");
                    self.sessions
                        .write()
                        .expect("session lock")
                        .insert(rec.id.clone(), Arc::new(Mutex::new(rec)));
                }
                Err(err) => {
                    tracing::warn!(path = %path.display(), %err, "skipping unreadable session log")
                }
            }
        }
        Ok(())
    }

    fn replay_log(&self, path: &Path) -> Result<SessionRecord, ServiceError> {
        let mut lines = BufReader::new(fs::File::open(path)?).lines();
        let first = lines.next().ok_or_else(|| storage("empty log"))??;
        let LogEntry::Create {
            id,
            created_at,
            request,
        } = serde_json::from_str(&first).map_err(storage)?
        else {
            return Err(storage("log does not start with a create entry"));
        };
        let mut rec = self.build(id, request, created_at)?;
        for line in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            match serde_json::from_str(&line).map_err(storage)? {
                LogEntry::Stroke { stroke } => {
                    rec.apply(&stroke)?;
                }
                LogEntry::Create { .. } => return Err(storage("duplicate create entry")),
            }
        }
        Ok(rec)
    }

    fn session(&self, id: &str) -> Result<Shared, ServiceError> {
        self.sessions
            .read()
            .expect("session lock")
            .get(id)
            .cloned()
            .ok_or_else(|| ServiceError::NotFound(format!("session {id}")))
    }

    pub fn session_ids(&self) -> Vec<String> {
        let mut ids: Vec<String> = self
            .sessions
            .read()
            .expect("session lock")
            .keys()
            .cloned()
            .collect();
        ids.sort();
        ids
    }

    pub async fn create_session(
        self: &Arc<Self>,
        request: CreateSession,
    ) -> Result<SessionView, ServiceError> {
        let store = self.clone();
        let id = uuid::Uuid::new_v4().simple().to_string();
        tokio::task::spawn_blocking(move || {
            let created_at = now();
            let rec = store.build(id.clone(), request.clone(), created_at)?;
            store.append(
                &id,
                &LogEntry::Create {
                    id: id.clone(),
                    created_at,
                    request,
                },
            )?;
            let view = rec.view();
            store
                .sessions
                .write()
                .expect("session lock")
                .insert(id, Arc::new(Mutex::new(rec)));
            Ok(view)
        })
        .await
        .map_err(storage)?
    }

    pub async fn get_session(&self, id: &str) -> Result<SessionView, ServiceError> {
        Ok(self.session(id)?.lock().await.view())
    }

    /// Strokes to one session run one at a time, in arrival order.
    pub async fn post_stroke(
        self: &Arc<Self>,
        id: &str,
        stroke: StrokeInput,
    ) -> Result<StrokeResponse, ServiceError> {
        let guard = self.session(id)?.lock_owned().await;
        let store = self.clone();
        tokio::task::spawn_blocking(move || {
            let mut rec = guard;
            let out = rec.apply(&stroke)?;
            store.append(&rec.id, &LogEntry::Stroke { stroke })?;
            Ok(out)
        })
        .await
        .map_err(storage)?
    }

    /// Runs the robot on a copy of the session; the session itself is untouched.
    pub async fn robot_replay(
        &self,
        id: &str,
        req: ReplayRequest,
    ) -> Result<InteractionTrace, ServiceError> {
        let (live, gt) = self.session(id)?.lock().await.replay_source()?;
        tokio::task::spawn_blocking(move || replay(live, &gt, &req))
            .await
            .map_err(storage)?
    }
}
