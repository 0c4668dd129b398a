use serde::{Deserialize, Serialize};

use super::{ObjectInstance, Rect, WorldState, DEFAULT_WORKSPACE};
use crate::registry::Shape;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CameraMode {
    #[default]
    TopdownOrtho,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraConfig {
    pub width: usize,
    pub height: usize,
    pub mode: CameraMode,
    /// Camera elevation above the table, meters.
    pub camera_height: f64,
    /// Table area imaged by the full frame.
    pub workspace: Rect,
    pub background_color: [u8; 3],
}

impl Default for CameraConfig {
    fn default() -> Self {
        Self {
            width: 160,
            height: 120,
            mode: CameraMode::TopdownOrtho,
            camera_height: 1.0,
            workspace: DEFAULT_WORKSPACE,
            background_color: [110, 96, 80],
        }
    }
}

impl CameraConfig {
    pub fn with_size(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            ..Self::default()
        }
    }

    /// Scales the default resolution; 1 is 160x120.
    pub fn scaled(scale: usize) -> Self {
        Self::with_size(160 * scale, 120 * scale)
    }

    /// Pixel (row, col) containing the table point (x, y), if in frame.
    pub fn project(&self, x: f64, y: f64) -> Option<(usize, usize)> {
        let ws = &self.workspace;
        let col = ((x - ws.x_min) / (ws.x_max - ws.x_min) * self.width as f64).floor();
        let row = ((ws.y_max - y) / (ws.y_max - ws.y_min) * self.height as f64).floor();
        let in_frame =
            col >= 0.0 && row >= 0.0 && (col as usize) < self.width && (row as usize) < self.height;
        in_frame.then_some((row as usize, col as usize))
    }

    /// Table point under the center of pixel (row, col).
    pub fn unproject(&self, row: usize, col: usize) -> (f64, f64) {
        let ws = &self.workspace;
        let x = ws.x_min + (col as f64 + 0.5) / self.width as f64 * (ws.x_max - ws.x_min);
        let y = ws.y_max - (row as f64 + 0.5) / self.height as f64 * (ws.y_max - ws.y_min);
        (x, y)
    }
}

fn inside(o: &ObjectInstance, x: f64, y: f64) -> bool {
    let (s, c) = o.pose.yaw.sin_cos();
    let (dx, dy) = (x - o.pose.x, y - o.pose.y);
    // Body frame of the object.
    let u = c * dx + s * dy;
    let v = -s * dx + c * dy;
    let r = o.footprint_radius;
    let a = r * std::f64::consts::FRAC_1_SQRT_2;
    match o.shape {
        Shape::Disc | Shape::Disk | Shape::Container | Shape::Peg => u * u + v * v <= r * r,
        Shape::Square | Shape::Slot => u.abs() <= a && v.abs() <= a,
        Shape::LBlock => {
            let in_box = u.abs() <= a && v.abs() <= a;
            in_box && (u <= 0.0 || v <= 0.0)
        }
    }
}

/// Orthographic top-down rasterization. Objects are painted in order of
/// their top height, so higher surfaces cover lower ones; depth is the
/// distance from the camera to the highest surface under each pixel.
pub fn render(state: &WorldState, camera: &CameraConfig) -> (Vec<u8>, Vec<f32>) {
    let (w, h) = (camera.width, camera.height);
    let mut rgb = Vec::with_capacity(w * h * 3);
    for _ in 0..w * h {
        rgb.extend_from_slice(&camera.background_color);
    }
    let mut top = vec![0.0f64; w * h];

    let mut order: Vec<&ObjectInstance> = state.objects.iter().collect();
    order.sort_by(|a, b| a.top().total_cmp(&b.top()));

    let ws = &camera.workspace;
    let px_w = (ws.x_max - ws.x_min) / w as f64;
    let px_h = (ws.y_max - ws.y_min) / h as f64;
    for o in order {
        let r = o.footprint_radius;
        // Pixel bounding box of the footprint circle.
        let c0 = (((o.pose.x - r - ws.x_min) / px_w).floor().max(0.0)) as usize;
        let c1 = (((o.pose.x + r - ws.x_min) / px_w).ceil().max(0.0) as usize).min(w);
        let r0 = (((ws.y_max - o.pose.y - r) / px_h).floor().max(0.0)) as usize;
        let r1 = (((ws.y_max - o.pose.y + r) / px_h).ceil().max(0.0) as usize).min(h);
        for row in r0..r1 {
            for col in c0..c1 {
                let (x, y) = camera.unproject(row, col);
                if inside(o, x, y) {
                    let i = row * w + col;
                    rgb[3 * i..3 * i + 3].copy_from_slice(&o.color);
                    top[i] = top[i].max(o.top());
                }
            }
        }
    }
    let depth = top
        .into_iter()
        .map(|t| (camera.camera_height - t) as f32)
        .collect();
    (rgb, depth)
}

#[cfg(test)]
mod tests {
    use super::super::{reset, Pose2};
    use super::*;
    use crate::taskspec::parse_task_spec;

    fn empty_world(camera: &CameraConfig) -> WorldState {
        let spec = parse_task_spec(
            "(define (problem empty) (:domain d) (:fixtures table - table) (:objects))",
        )
        .unwrap();
        reset(&spec, 0, camera).unwrap().0
    }

    fn disc(x: f64, y: f64, height: f64, color: [u8; 3]) -> ObjectInstance {
        ObjectInstance {
            name: "disc_1".into(),
            class: "disc".into(),
            shape: Shape::Disc,
            pose: Pose2::new(x, y, 0.0),
            z: 0.0,
            footprint_radius: 0.03,
            height,
            color,
            graspable: true,
        }
    }

    #[test]
    fn empty_world_is_background() {
        let cam = CameraConfig::default();
        let w = empty_world(&cam);
        let (rgb, depth) = render(&w, &cam);
        assert_eq!(rgb.len(), 160 * 120 * 3);
        assert!(rgb.chunks(3).all(|p| p == cam.background_color));
        assert!(depth.iter().all(|&d| d == cam.camera_height as f32));
    }

    #[test]
    fn disc_depth_under_two_meter_camera() {
        let cam = CameraConfig {
            camera_height: 2.0,
            ..CameraConfig::default()
        };
        let mut w = empty_world(&cam);
        w.objects.push(disc(0.05, -0.02, 0.04, [200, 30, 30]));
        let (rgb, depth) = render(&w, &cam);
        let (row, col) = cam.project(0.05, -0.02).unwrap();
        let i = row * cam.width + col;
        assert!((depth[i] - 1.96).abs() < 1e-6);
        let px = &rgb[3 * i..3 * i + 3];
        assert!(px[0] > px[1] && px[0] > px[2]);
        // Far corner untouched.
        assert_eq!(depth[0], 2.0);
    }

    #[test]
    fn higher_object_paints_over_lower() {
        let cam = CameraConfig::default();
        let mut w = empty_world(&cam);
        let mut tall = disc(0.0, 0.0, 0.05, [0, 0, 255]);
        tall.footprint_radius = 0.01;
        w.objects.push(tall);
        w.objects.push(disc(0.0, 0.0, 0.02, [255, 0, 0]));
        let (rgb, depth) = render(&w, &cam);
        let (row, col) = cam.project(0.0, 0.0).unwrap();
        let i = row * cam.width + col;
        assert_eq!(&rgb[3 * i..3 * i + 3], &[0, 0, 255]);
        assert!((depth[i] - 0.95).abs() < 1e-6);
    }

    #[test]
    fn projection_round_trip() {
        let cam = CameraConfig::default();
        for row in [0, 17, 119] {
            for col in [0, 80, 159] {
                let (x, y) = cam.unproject(row, col);
                assert_eq!(cam.project(x, y), Some((row, col)));
            }
        }
        assert_eq!(cam.project(0.3, 0.0), None);
    }
}
