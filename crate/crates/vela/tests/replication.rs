//! Cross-cluster listener/drainer synchronization tests.

mod common;

use common::*;
use vela::cluster::sim::SimCluster;
use vela::meta::MetaCommand;
use vela::query::Session;
use vela::replication::{verify_convergence, Drainer, ReplicationLink, ShipOp};

/// Primary with listeners attached on every partition plus a meta
/// listener, and an empty secondary.
fn replicated_pair(seed: u64, parts: u32) -> (SimCluster, Session, SimCluster, ReplicationLink) {
    let mut primary = SimCluster::new(3, seed);
    primary.bootstrap().unwrap();
    let mut s = admin_session();
    run(
        &mut primary,
        &mut s,
        &format!("CREATE SPACE social (partition_num = {parts}, replica_factor = 1, vid_len = 16)"),
    );
    run(&mut primary, &mut s, "USE social");
    run(&mut primary, &mut s, "CREATE TAG person (name STRING, age INT64)");
    run(&mut primary, &mut s, "CREATE EDGE likes (weight INT64)");
    run(&mut primary, &mut s, "CREATE EDGE follows (since INT64)");
    let space = primary.space_id("social").unwrap();
    primary.meta_op(MetaCommand::SetMetaListener { host: 1 }).unwrap();
    primary
        .meta_op(MetaCommand::AttachListeners { space, listeners: vec![2, 3] })
        .unwrap();
    primary.quiesce(2_000);

    let mut secondary = SimCluster::new(2, seed ^ 0x5ec);
    secondary.bootstrap().unwrap();
    secondary.read_only = true;

    let link = ReplicationLink::from_catalog(&primary, 2, seed);
    (primary, s, secondary, link)
}

fn pump_until_converged(
    primary: &mut SimCluster,
    secondary: &mut SimCluster,
    link: &mut ReplicationLink,
    rounds: usize,
) -> bool {
    for _ in 0..rounds {
        primary.run_ticks(10);
        link.pump(primary, secondary);
        if link.caught_up(primary) && link.backlog() == 0 {
            return true;
        }
    }
    false
}

#[test]
fn ddl_and_data_replicate_in_order() {
    let (mut primary, mut s, mut secondary, mut link) = replicated_pair(41, 4);
    random_graph(&mut primary, &mut s, 12, 30, 5);
    // schema created before dependent inserts even though lanes differ
    assert!(pump_until_converged(&mut primary, &mut secondary, &mut link, 400));
    let report = verify_convergence(&primary, &secondary);
    assert!(report.converged, "{report:?}");
}

#[test]
fn duplicate_redelivery_is_idempotent() {
    let mut drainer = Drainer::new(None);
    let op = ShipOp::CreateSpace { name: "x".into(), partition_num: 2, replica_factor: 1, vid_len: 8 };
    let batch = vec![(1u64, op.clone()), (2u64, op.clone())];
    let w1 = drainer.receive("meta", batch.clone());
    let w2 = drainer.receive("meta", batch);
    assert_eq!((w1, w2), (2, 2));
    let mut secondary = SimCluster::new(1, 99);
    secondary.bootstrap().unwrap();
    drainer.apply(&mut secondary);
    drainer.apply(&mut secondary);
    assert_eq!(drainer.applied["meta"], 2);
    assert_eq!(drainer.backlog(), 0);
}

#[test]
fn listener_crash_and_restart_leaves_no_gap() {
    let (mut primary, mut s, mut secondary, mut link) = replicated_pair(43, 4);
    random_graph(&mut primary, &mut s, 8, 20, 7);
    for _ in 0..30 {
        primary.run_ticks(5);
        link.pump(&mut primary, &mut secondary);
    }
    // kill a listener mid-stream, write more, restart
    primary.crash_host(2, 200);
    random_graph(&mut primary, &mut s, 6, 15, 8);
    primary.run_ticks(300);
    assert!(primary.is_up(2));
    assert!(pump_until_converged(&mut primary, &mut secondary, &mut link, 600));
    let report = verify_convergence(&primary, &secondary);
    assert!(report.converged, "{report:?}");
    // lsn continuity at the drainers: received == applied, no gaps seen
    for d in &link.drainers {
        for (src, high) in &d.received {
            assert_eq!(d.applied.get(src), Some(high));
        }
    }
}

#[test]
fn drainer_outage_buffers_then_converges() {
    let (mut primary, mut s, mut secondary, mut link) = replicated_pair(44, 4);
    link.drainer_up = vec![false, false];
    random_graph(&mut primary, &mut s, 10, 25, 9);
    for _ in 0..50 {
        primary.run_ticks(5);
        link.pump(&mut primary, &mut secondary);
    }
    assert!(!verify_convergence(&primary, &secondary).converged);
    link.drainer_up = vec![true, true];
    assert!(pump_until_converged(&mut primary, &mut secondary, &mut link, 600));
    assert!(verify_convergence(&primary, &secondary).converged);
}

#[test]
fn lossy_lanes_still_converge() {
    let (mut primary, mut s, mut secondary, mut link) = replicated_pair(45, 4);
    link.drop_prob = 0.4;
    random_graph(&mut primary, &mut s, 10, 30, 11);
    assert!(pump_until_converged(&mut primary, &mut secondary, &mut link, 1_500));
    assert!(verify_convergence(&primary, &secondary).converged);
}

#[test]
fn chained_three_cluster_topology_converges() {
    let (mut primary, mut s, mut secondary, mut link_ab) = replicated_pair(46, 4);
    random_graph(&mut primary, &mut s, 10, 24, 13);
    assert!(pump_until_converged(&mut primary, &mut secondary, &mut link_ab, 600));

    // secondary ships onward to a tertiary: attach listeners on it
    let space = secondary.space_id("social").unwrap();
    secondary.meta_op(MetaCommand::SetMetaListener { host: 1 }).unwrap();
    secondary
        .meta_op(MetaCommand::AttachListeners { space, listeners: vec![2] })
        .unwrap();
    secondary.quiesce(2_000);
    let mut tertiary = SimCluster::new(1, 777);
    tertiary.bootstrap().unwrap();
    tertiary.read_only = true;
    let mut link_bc = ReplicationLink::from_catalog(&secondary, 1, 46);

    // keep writing at the head of the chain
    random_graph(&mut primary, &mut s, 6, 12, 14);
    for _ in 0..800 {
        primary.run_ticks(5);
        link_ab.pump(&mut primary, &mut secondary);
        link_bc.pump(&mut secondary, &mut tertiary);
        if link_ab.caught_up(&primary)
            && link_bc.caught_up(&secondary)
            && link_ab.backlog() == 0
            && link_bc.backlog() == 0
        {
            break;
        }
    }
    assert!(verify_convergence(&primary, &secondary).converged);
    let report = verify_convergence(&secondary, &tertiary);
    assert!(report.converged, "{report:?}");
}

#[test]
fn heterogeneous_partition_counts_converge() {
    let (mut primary, mut s, mut secondary, mut link) = replicated_pair(47, 6);
    for d in &mut link.drainers {
        d.partition_override = Some(2); // secondary re-hashes placement
    }
    random_graph(&mut primary, &mut s, 12, 30, 15);
    assert!(pump_until_converged(&mut primary, &mut secondary, &mut link, 600));
    let report = verify_convergence(&primary, &secondary);
    assert!(report.converged, "{report:?}");
    let sid = secondary.space_id("social").unwrap();
    assert_eq!(secondary.catalog().space(sid).unwrap().def.partition_num, 2);
}

#[test]
fn dropped_forever_entry_is_pinpointed() {
    let (mut primary, mut s, mut secondary, mut link) = replicated_pair(48, 2);
    random_graph(&mut primary, &mut s, 6, 10, 17);
    assert!(pump_until_converged(&mut primary, &mut secondary, &mut link, 600));
    // silently remove one vertex from the secondary, as if an entry had
    // been lost forever
    let sid = secondary.space_id("social").unwrap();
    secondary.read_only = false;
    secondary.delete_vertex(sid, "p0", false).unwrap();
    secondary.quiesce(500);
    let report = verify_convergence(&primary, &secondary);
    assert!(!report.converged);
    assert!(
        report.only_primary.iter().any(|e| e.contains("v/p0/")),
        "{report:?}"
    );
}

#[test]
fn secondary_rejects_client_writes() {
    let (_, _, mut secondary, _) = replicated_pair(49, 2);
    let mut session = admin_session();
    let err = run_err(
        &mut secondary,
        &mut session,
        "CREATE SPACE other (partition_num = 1, replica_factor = 1, vid_len = 8)",
    );
    assert!(err.to_string().contains("read-only"), "{err}");
}
